#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s3mamba/tensor.hpp"

namespace s3 {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Adam with bias correction. Moments are stored per parameter, in the order
/// the parameters were registered.
class Adam {
 public:
  Adam(NamedTensors params, AdamOptions options);

  // Throws std::runtime_error naming the parameter when a gradient is missing.
  void step();
  void zero_grad();

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  const NamedTensors& params() const { return params_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  NamedTensors params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

}  // namespace s3
