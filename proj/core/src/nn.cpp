#include "s3mamba/nn.hpp"

#include <cmath>

namespace s3::nn {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
  return t;
}

void add_param(NamedTensors& out, const std::string& prefix, const std::string& name, const Tensor& t) {
  if (t.numel() == 0) return;
  out.emplace_back(prefix + name, t);
}

Linear Linear::create(std::size_t in, std::size_t out, SplitMix64& rng, bool with_bias) {
  Linear l;
  l.weight = kaiming_uniform({in, out}, in, rng);
  l.bias = with_bias ? Tensor::zeros({out}, true) : Tensor::zeros({0});
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = Tensor::zeros({in, out}, true);
  l.bias = with_bias ? Tensor::zeros({out}, true) : Tensor::zeros({0});
  return l;
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  add_param(out, prefix, "weight", weight);
  add_param(out, prefix, "bias", bias);
}

Conv2d Conv2d::create(std::size_t in, std::size_t out, std::size_t ksize, SplitMix64& rng,
                      std::size_t groups, PaddingMode padding) {
  Conv2d c;
  const std::size_t in_per_group = in / groups;
  c.weight = kaiming_uniform({out, in_per_group, ksize, ksize}, in_per_group * ksize * ksize, rng);
  c.bias = Tensor::zeros({out}, true);
  c.groups = groups;
  c.padding = padding;
  return c;
}

void Conv2d::collect(const std::string& prefix, NamedTensors& out) const {
  add_param(out, prefix, "weight", weight);
  add_param(out, prefix, "bias", bias);
}

LayerNorm LayerNorm::create(std::size_t channels) {
  LayerNorm n;
  n.gamma = Tensor::full({channels}, 1.0, true);
  n.beta = Tensor::zeros({channels}, true);
  return n;
}

void LayerNorm::collect(const std::string& prefix, NamedTensors& out) const {
  add_param(out, prefix, "gamma", gamma);
  add_param(out, prefix, "beta", beta);
}

std::size_t parameter_count(const NamedTensors& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace s3::nn
