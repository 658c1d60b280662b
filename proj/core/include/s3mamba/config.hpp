#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "s3mamba/dataset.hpp"
#include "s3mamba/model.hpp"

namespace s3 {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  double lr = 1e-4;
  std::size_t decay_epochs = 20;
  double decay_factor = 0.5;
  std::uint64_t seed = 0;           // model initialization
  std::size_t samples_per_epoch = 0;  // 0: one per training image
  std::size_t save_every = 10;      // the final epoch is always saved
  std::size_t val_every = 1;        // 0 disables validation
  std::size_t val_images = 0;       // 0: the whole validation split

  void validate() const;
};

struct EvalConfig {
  std::vector<double> scales = {2.0, 3.0, 3.5, 4.0, 6.0};
  long shave = -1;  // -1: ceil(scale)

  void validate() const;
};

struct RunConfig {
  DatasetConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict parse: every key optional, unknown keys and type mismatches throw
/// ConfigError naming the offending path.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Effective configuration with every field present, pretty-printed.
std::string dump_run_config(const RunConfig& cfg);

/// lr0 * factor^floor(epoch / decay_epochs), epoch counted from 0.
double lr_at(const TrainConfig& cfg, std::size_t epoch);

}  // namespace s3
