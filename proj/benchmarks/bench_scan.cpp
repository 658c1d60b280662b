#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "s3mamba/rng.hpp"
#include "s3mamba/ssm.hpp"

namespace {

struct ScanData {
  std::size_t L, Din, N;
  std::vector<double> x, delta, B, C, A, D, y;

  ScanData(std::size_t l, std::size_t din, std::size_t n) : L(l), Din(din), N(n) {
    s3::SplitMix64 rng(1);
    auto fill = [&](std::vector<double>& v, std::size_t k, double lo, double hi) {
      v.resize(k);
      for (double& e : v) e = rng.uniform(lo, hi);
    };
    fill(x, L * Din, -1, 1);
    fill(delta, L * Din, 0.01, 1);
    fill(B, L * N, -1, 1);
    fill(C, L * N, -1, 1);
    fill(A, Din * N, -4, -0.1);
    fill(D, Din, -1, 1);
    y.resize(L * Din);
  }
  s3::ssm::ScanView view() const { return {x, delta, B, C, A, D, L, Din, N}; }
};

void BM_ScanSequential(benchmark::State& state) {
  ScanData d(static_cast<std::size_t>(state.range(0)), 16, 8);
  for (auto _ : state) {
    s3::ssm::scan_sequential(d.view(), d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

void BM_ScanBlocked(benchmark::State& state) {
  ScanData d(static_cast<std::size_t>(state.range(0)), 16, 8);
  for (auto _ : state) {
    s3::ssm::scan_blocked(d.view(), d.y, 64, 1);
    benchmark::DoNotOptimize(d.y.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanBlocked)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

void BM_Zoh(benchmark::State& state) {
  double a = -0.5, acc = 0;
  for (auto _ : state) {
    acc += s3::ssm::zoh_discretize(a, 1.0, 0.1).b_bar;
    a -= 1e-9;
  }
  benchmark::DoNotOptimize(acc);
}
BENCHMARK(BM_Zoh);

}  // namespace

BENCHMARK_MAIN();
