#include <benchmark/benchmark.h>

#include "s3mamba/autodiff.hpp"
#include "s3mamba/model.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/sssm_block.hpp"

namespace {

using namespace s3;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(0, 1);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  SplitMix64 rng(1);
  const nn::Conv2d conv = nn::Conv2d::create(c, c, 3, rng);
  const Tensor x = random_tensor({c, 24, 24}, 2);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(conv(x).values().data());
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_SssmBlock(benchmark::State& state) {
  BlockConfig cfg;
  SplitMix64 rng(3);
  const SssmBlock block = SssmBlock::create(cfg, rng);
  const Tensor f = random_tensor({cfg.d_model, 24, 24}, 4);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(block(FeatureMap{f}, 2.0).values.values().data());
}
BENCHMARK(BM_SssmBlock)->Unit(benchmark::kMillisecond);

// One training sample of the toy profile: forward, L1 and backward.
void BM_ToyTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.residual_bicubic = true;
  SplitMix64 rng(5);
  const S3Model model = S3Model::create(cfg, rng);
  const Tensor lr = random_tensor({3, 24, 24}, 6);
  const Tensor coords = query_grid(8, 8);
  const Tensor target = random_tensor({64, 3}, 7);
  for (auto _ : state) {
    const Tensor loss = mean(abs(sub(model.forward(lr, coords, 2.0), target)));
    backward(loss);
  }
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

void BM_ToyUpscale96(benchmark::State& state) {
  ModelConfig cfg;
  SplitMix64 rng(8);
  const S3Model model = S3Model::create(cfg, rng);
  Image lr(3, 48, 48, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(upscale(model, lr, 96, 96, 2.0).data.data());
}
BENCHMARK(BM_ToyUpscale96)->Unit(benchmark::kMillisecond);

}  // namespace
