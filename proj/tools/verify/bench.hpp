#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace s3::verify {

struct ScanBenchOptions {
  std::vector<std::size_t> lengths = {1024, 2048, 4096};
  std::size_t repeat = 7;
  std::size_t d_inner = 16;
  std::size_t n_state = 8;
  std::size_t block = 64;
  std::size_t threads = 1;
  double ratio_limit = 6.0;  // bound on time(4L) / time(L)
  double agree_tol = 1e-10;
  std::uint64_t seed = 7;
};

struct ScanBenchRow {
  std::string impl;  // "sequential" or "parallel"
  std::size_t length = 0;
  double median_ms = 0.0;
};

struct ScanBenchReport {
  std::vector<ScanBenchRow> rows;
  double max_abs_diff = 0.0;  // sequential vs parallel over every length
  double worst_ratio = 0.0;   // largest time(4L) / time(L) seen
  bool ratio_ok = true;
  bool agree_ok = true;
  std::string failure;  // empty when both checks hold
};

/// Times both scan kernels on random problems. Pairs (L, 4L) are bounded by
/// ratio_limit; when the lengths contain no such pair, the first and last
/// lengths are compared against 1.5 times their length ratio.
ScanBenchReport run_scan_bench(const ScanBenchOptions& opt);

}  // namespace s3::verify
