#pragma once

#include <cstddef>
#include <string>

#include "s3mamba/adam.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/rng.hpp"
#include "s3mamba/tensor.hpp"

namespace s3::nn {

// Kaiming-uniform with negative slope sqrt(5): U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng);

// Registers a parameter under prefix + name.
void add_param(NamedTensors& out, const std::string& prefix, const std::string& name, const Tensor& t);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or [0]

  static Linear create(std::size_t in, std::size_t out, SplitMix64& rng, bool with_bias = true);
  static Linear zeros(std::size_t in, std::size_t out, bool with_bias = true);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct Conv2d {
  Tensor weight;  // [out, in/groups, k, k]
  Tensor bias;    // [out]
  std::size_t groups = 1;
  PaddingMode padding = PaddingMode::zero;

  static Conv2d create(std::size_t in, std::size_t out, std::size_t ksize, SplitMix64& rng,
                       std::size_t groups = 1, PaddingMode padding = PaddingMode::zero);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, groups, padding); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm create(std::size_t channels);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

std::size_t parameter_count(const NamedTensors& params);

}  // namespace s3::nn
