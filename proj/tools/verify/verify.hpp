#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "s3mamba/adam.hpp"
#include "s3mamba/model.hpp"
#include "s3mamba/rng.hpp"
#include "s3mamba/tensor.hpp"

namespace s3::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct ZohOptions {
  std::size_t samples = 100000;
  double rel_tol = 1e-9;
  double boundary_tol = 1e-12;
  double perturbation = 0.0;  // added to a_bar before comparison (test hook)
  std::uint64_t seed = 1;
};
CheckResult check_zoh(const ZohOptions& opt);

struct ScanOptions {
  std::size_t instances = 100;
  std::size_t max_length = 1024;
  std::size_t max_d_inner = 8;
  std::size_t max_state = 8;
  double parallel_tol = 1e-10;
  std::size_t dense_instances = 20;
  std::size_t dense_max_length = 16;
  double dense_tol = 1e-12;
  std::uint64_t seed = 2;
};
CheckResult check_scan(const ScanOptions& opt);

/// Central differences against reverse mode. `loss` rebuilds the scalar from
/// scratch; `kinks` (optional) returns the sign pattern of every
/// non-differentiable argument so coordinates whose pattern changes between
/// +h and -h are excluded.
struct GradStats {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t excluded = 0;
  double worst_rel = 0.0;
  std::string worst_name;
};
GradStats finite_difference(const std::function<Tensor()>& loss, const NamedTensors& inputs,
                            std::size_t coords_per_tensor, double h, double rel_tol, double floor,
                            SplitMix64& rng, const std::function<std::vector<int>()>& kinks = {});

struct GradOptions {
  double h = 1e-5;
  double rel_tol = 1e-4;
  double floor = 1e-7;       // denominator floor for the relative error
  double pass_fraction = 0.99;
  std::size_t coords_per_tensor = 6;
  std::uint64_t seed = 3;
};
/// Per-op checks plus the end-to-end toy model (8x8 LR, Q = 16, d_model = 8,
/// N = 4) with every parameter randomized away from its initial value.
CheckResult check_gradients(const GradOptions& opt);

/// The toy model used for end-to-end gradient checks.
S3Model gradient_toy_model(std::uint64_t seed, MixerKind kind = MixerKind::sssm);
/// Overwrites every parameter with a random value of comparable scale.
void randomize_parameters(const S3Model& model, SplitMix64& rng);

struct ResampleOptions {
  double precision_tol = 1e-10;
  double direct_tol = 1e-12;
};
CheckResult check_resampler(const ResampleOptions& opt);

struct MetricOptions {
  double psnr_tol = 1e-6;
  double ssim_tol = 1e-9;
};
CheckResult check_metrics(const MetricOptions& opt);

struct IdentityOptions {
  std::size_t pairs = 100;
  double tol = 1e-12;
  std::uint64_t seed = 4;
};
/// Freshly initialized scale heads: SSSM output equals the scale-blind SSM.
CheckResult check_identity_at_init(const IdentityOptions& opt);

struct VerifyOptions {
  double zoh_perturbation = 0.0;
};
std::vector<CheckResult> run_all(const VerifyOptions& opt,
                                 const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace s3::verify
