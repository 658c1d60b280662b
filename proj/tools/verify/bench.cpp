#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "s3mamba/rng.hpp"
#include "s3mamba/ssm.hpp"

namespace s3::verify {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ScanBenchReport run_scan_bench(const ScanBenchOptions& opt) {
  if (opt.lengths.empty()) throw std::invalid_argument("bench-scan: no lengths given");
  if (!std::is_sorted(opt.lengths.begin(), opt.lengths.end()) || opt.lengths.front() == 0)
    throw std::invalid_argument("bench-scan: lengths must be positive and ascending");
  if (opt.repeat == 0) throw std::invalid_argument("bench-scan: repeat must be positive");

  using Clock = std::chrono::steady_clock;
  SplitMix64 rng(opt.seed);
  const std::size_t Din = opt.d_inner, N = opt.n_state;
  std::vector<double> A(Din * N), D(Din);
  for (double& v : A) v = -std::exp(rng.uniform(std::log(0.05), std::log(10.0)));
  for (double& v : D) v = rng.normal();

  ScanBenchReport rep;
  std::map<std::size_t, double> seq_ms, par_ms;
  for (const std::size_t L : opt.lengths) {
    std::vector<double> x(L * Din), delta(L * Din), B(L * N), C(L * N);
    for (double& v : x) v = rng.normal();
    for (double& v : delta) v = std::exp(rng.uniform(std::log(1e-3), std::log(2.0)));
    for (double& v : B) v = rng.normal();
    for (double& v : C) v = rng.normal();
    const ssm::ScanView view{x, delta, B, C, A, D, L, Din, N};
    std::vector<double> ys(L * Din), yp(L * Din);

    // One untimed pass of each warms caches and the allocator.
    ssm::scan_sequential(view, ys);
    ssm::scan_blocked(view, yp, opt.block, opt.threads);
    for (std::size_t i = 0; i < ys.size(); ++i) rep.max_abs_diff = std::max(rep.max_abs_diff, std::fabs(ys[i] - yp[i]));

    std::vector<double> ts, tp;
    for (std::size_t r = 0; r < opt.repeat; ++r) {
      auto t0 = Clock::now();
      ssm::scan_sequential(view, ys);
      auto t1 = Clock::now();
      ssm::scan_blocked(view, yp, opt.block, opt.threads);
      auto t2 = Clock::now();
      ts.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      tp.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    seq_ms[L] = median_of(ts);
    par_ms[L] = median_of(tp);
  }
  for (const std::size_t L : opt.lengths) rep.rows.push_back({"sequential", L, seq_ms[L]});
  for (const std::size_t L : opt.lengths) rep.rows.push_back({"parallel", L, par_ms[L]});

  auto check_pair = [&](std::size_t lo, std::size_t hi, double limit) {
    for (const auto* m : {&seq_ms, &par_ms}) {
      const double ratio = m->at(hi) / std::max(m->at(lo), 1e-9);
      rep.worst_ratio = std::max(rep.worst_ratio, ratio);
      if (ratio >= limit) {
        rep.ratio_ok = false;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s time(%zu)/time(%zu) = %.3f >= %.3f",
                      m == &seq_ms ? "sequential" : "parallel", hi, lo, ratio, limit);
        rep.failure = buf;
      }
    }
  };
  bool any_pair = false;
  for (const std::size_t L : opt.lengths) {
    if (seq_ms.count(4 * L)) {
      check_pair(L, 4 * L, opt.ratio_limit);
      any_pair = true;
    }
  }
  if (!any_pair && opt.lengths.size() > 1) {
    const std::size_t lo = opt.lengths.front(), hi = opt.lengths.back();
    check_pair(lo, hi, 1.5 * static_cast<double>(hi) / static_cast<double>(lo));
  }
  if (rep.max_abs_diff > opt.agree_tol) {
    rep.agree_ok = false;
    char buf[128];
    std::snprintf(buf, sizeof buf, "sequential and parallel differ by %.3e > %.0e", rep.max_abs_diff, opt.agree_tol);
    rep.failure = buf;
  }
  return rep;
}

}  // namespace s3::verify
