#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3mamba/adam.hpp"
#include "s3mamba/config.hpp"
#include "s3mamba/dataset.hpp"
#include "s3mamba/metrics.hpp"
#include "s3mamba/model.hpp"

namespace s3 {

/// Mean absolute error over every entry of two equally shaped tensors.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground truth cropped to floor(floor(H/s) s) x floor(floor(W/s) s), its
/// bicubic LR, and the HR size the model must produce.
struct EvalCase {
  Image gt;
  Image lr;
};
EvalCase make_eval_case(const Image& hr, double scale);

struct EvalRow {
  double scale = 0.0;
  std::string method;  // "model" or "bicubic"
  MetricReport metrics;  // averaged over images
};

/// Mean metrics over `images` for the model and the bicubic baseline at each
/// scale. shave < 0 selects ceil(scale).
std::vector<EvalRow> evaluate(const S3Model& model, const std::vector<Image>& images,
                              const std::vector<double>& scales, long shave = -1);
MetricReport evaluate_bicubic(const std::vector<Image>& images, double scale, long shave = -1);
MetricReport evaluate_model(const S3Model& model, const std::vector<Image>& images, double scale, long shave = -1);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double loss = 0.0;
  std::optional<double> psnr_x2;
  std::optional<double> psnr_x3;
  double lr = 0.0;
};

std::string csv_header();
std::string csv_row(const EpochLog& log);

class Trainer {
 public:
  Trainer(RunConfig cfg, Corpus corpus);

  const RunConfig& config() const { return cfg_; }
  const S3Model& model() const { return model_; }
  S3Model& model() { return model_; }
  const Adam& optimizer() const { return adam_; }
  std::size_t epoch() const { return epoch_; }
  const Corpus& corpus() const { return corpus_; }

  /// One epoch over the deterministic sample stream; throws DivergenceError on
  /// a non-finite loss.
  EpochLog run_epoch();

  /// Runs until cfg.train.epochs, calling on_epoch after each epoch.
  void train(const std::function<void(const Trainer&, const EpochLog&)>& on_epoch = {});

  void save(const std::filesystem::path& path, bool f32 = false) const;
  /// Restores parameters, optimizer moments, step and epoch counters. The
  /// checkpoint's model config must match this trainer's.
  void load(const std::filesystem::path& path);

 private:
  RunConfig cfg_;
  Corpus corpus_;
  S3Model model_;
  Adam adam_;
  std::size_t epoch_ = 0;
};

/// Contents of a checkpoint file.
struct Checkpoint {
  int version = 1;
  std::string config_json;  // effective RunConfig
  std::size_t epoch = 0;
  std::int64_t adam_step = 0;
  double adam_lr = 0.0;
  std::uint64_t rng_state = 0;
  NamedTensors params;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, bool f32 = false);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model rebuilt from a checkpoint's embedded config and parameters.
S3Model load_model(const std::filesystem::path& path, RunConfig* cfg_out = nullptr);

struct AblationVariant {
  std::string name;
  ModelConfig model;
};

struct AblationResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  std::vector<std::pair<double, double>> psnr;  // (scale, PSNR RGB)
};

/// Trains every variant once per seed on the same corpus and sample stream
/// and scores the validation split at `scales`.
std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<AblationVariant>& variants,
                                         const std::vector<std::uint64_t>& seeds, const Corpus& corpus,
                                         const std::vector<double>& scales,
                                         const std::function<void(const AblationResult&)>& on_result = {});

double median(std::vector<double> v);

}  // namespace s3
