#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "s3mamba/autodiff.hpp"
#include "s3mamba/metrics.hpp"
#include "s3mamba/ops.hpp"
#include "s3mamba/resample.hpp"
#include "s3mamba/ssm.hpp"
#include "s3mamba/sssm_block.hpp"
#include "s3mamba/trainer.hpp"

namespace s3::verify {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <typename Fn>
CheckResult timed(const std::string& name, Fn&& fn) {
  const auto t0 = Clock::now();
  CheckResult r = fn();
  r.name = name;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

double rel_err(long double got, long double want) {
  const long double den = std::max(std::fabs(want), std::numeric_limits<long double>::min());
  return static_cast<double>(std::fabs(got - want) / den);
}

}  // namespace

// ---- ZOH ----

CheckResult check_zoh(const ZohOptions& opt) {
  return timed("zoh-oracle", [&] {
    SplitMix64 rng(opt.seed);
    double worst = 0.0;
    double worst_quad = 0.0;
    for (std::size_t i = 0; i < opt.samples; ++i) {
      // Log-uniform magnitudes reach both the Taylor and the exact branch.
      const double a = -std::exp(rng.uniform(std::log(1e-8), std::log(10.0)));
      const double delta = std::exp(rng.uniform(std::log(1e-6), 0.0));
      const double b = rng.uniform(-5.0, 5.0);
      const auto got = ssm::zoh_discretize(a, b, delta);
      const double a_bar = got.a_bar + opt.perturbation;
      const auto mx = oracle::zoh_matrix_exponential(a, b, delta);
      const auto qd = oracle::zoh_quadrature(a, b, delta);
      worst = std::max({worst, rel_err(a_bar, mx.a_bar), rel_err(got.b_bar, mx.b_bar)});
      worst_quad = std::max({worst_quad, rel_err(a_bar, qd.a_bar), rel_err(got.b_bar, qd.b_bar)});
    }

    // Adjacent doubles on both sides of the Taylor switch.
    double jump = 0.0;
    for (const double sign : {-1.0, 1.0}) {
      const double edge = sign * ssm::kTaylorThreshold;
      const double inner = std::nextafter(edge, 0.0);
      const double outer = std::nextafter(edge, sign * 1.0);
      for (const double delta : {1.0, 1e-3, 0.37}) {
        const double bi = ssm::zoh_discretize(inner / delta, 1.0, delta).b_bar / delta;
        const double bo = ssm::zoh_discretize(outer / delta, 1.0, delta).b_bar / delta;
        jump = std::max(jump, std::fabs(bi - bo));
        const double be = ssm::zoh_discretize(edge / delta, 1.0, delta).b_bar / delta;
        jump = std::max({jump, std::fabs(be - bi), std::fabs(be - bo)});
      }
    }

    CheckResult r;
    r.passed = worst <= opt.rel_tol && worst_quad <= opt.rel_tol && jump <= opt.boundary_tol;
    r.detail = std::to_string(opt.samples) + " samples, max rel err " + fmt("%.3e", worst) + " (matrix exp), " +
               fmt("%.3e", worst_quad) + " (quadrature), tol " + fmt("%.0e", opt.rel_tol) +
               "; Taylor switch jump " + fmt("%.3e", jump) + ", tol " + fmt("%.0e", opt.boundary_tol);
    return r;
  });
}

// ---- scan ----

namespace {

oracle::ScanProblem random_problem(std::size_t L, std::size_t Din, std::size_t N, SplitMix64& rng) {
  oracle::ScanProblem p;
  p.length = L;
  p.d_inner = Din;
  p.n_state = N;
  p.x.resize(L * Din);
  p.delta.resize(L * Din);
  p.B.resize(L * N);
  p.C.resize(L * N);
  p.A.resize(Din * N);
  p.D.resize(Din);
  for (double& v : p.x) v = rng.normal();
  for (double& v : p.delta) v = std::exp(rng.uniform(std::log(1e-3), std::log(2.0)));
  for (double& v : p.B) v = rng.normal();
  for (double& v : p.C) v = rng.normal();
  for (double& v : p.A) v = -std::exp(rng.uniform(std::log(0.05), std::log(10.0)));
  for (double& v : p.D) v = rng.normal();
  return p;
}

ssm::ScanView view_of(const oracle::ScanProblem& p) {
  return {p.x, p.delta, p.B, p.C, p.A, p.D, p.length, p.d_inner, p.n_state};
}

}  // namespace

CheckResult check_scan(const ScanOptions& opt) {
  return timed("scan-equivalence", [&] {
    SplitMix64 rng(opt.seed);
    double worst_par = 0.0;
    for (std::size_t i = 0; i < opt.instances; ++i) {
      const std::size_t L = i == 0 ? opt.max_length : 1 + rng.index(opt.max_length);
      const std::size_t Din = 1 + rng.index(opt.max_d_inner);
      const std::size_t N = 1 + rng.index(opt.max_state);
      const auto p = random_problem(L, Din, N, rng);
      std::vector<double> ys(L * Din), yp(L * Din);
      ssm::scan_sequential(view_of(p), ys);
      const std::size_t block = 1 + rng.index(128);
      const std::size_t threads = 1 + rng.index(4);
      ssm::scan_blocked(view_of(p), yp, block, threads);
      for (std::size_t k = 0; k < ys.size(); ++k) worst_par = std::max(worst_par, std::fabs(ys[k] - yp[k]));
    }
    double worst_dense = 0.0;
    for (std::size_t i = 0; i < opt.dense_instances; ++i) {
      const std::size_t L = 1 + rng.index(opt.dense_max_length);
      const std::size_t Din = 1 + rng.index(opt.max_d_inner);
      const std::size_t N = 1 + rng.index(opt.max_state);
      const auto p = random_problem(L, Din, N, rng);
      std::vector<double> ys(L * Din);
      ssm::scan_sequential(view_of(p), ys);
      const auto yd = oracle::dense_scan(p);
      for (std::size_t k = 0; k < ys.size(); ++k) worst_dense = std::max(worst_dense, std::fabs(ys[k] - yd[k]));
    }
    CheckResult r;
    r.passed = worst_par <= opt.parallel_tol && worst_dense <= opt.dense_tol;
    r.detail = std::to_string(opt.instances) + " instances, sequential vs blocked max abs diff " +
               fmt("%.3e", worst_par) + " (tol " + fmt("%.0e", opt.parallel_tol) + "); " +
               std::to_string(opt.dense_instances) + " dense-oracle instances, max abs diff " +
               fmt("%.3e", worst_dense) + " (tol " + fmt("%.0e", opt.dense_tol) + ")";
    return r;
  });
}

// ---- gradients ----

GradStats finite_difference(const std::function<Tensor()>& loss, const NamedTensors& inputs,
                            std::size_t coords_per_tensor, double h, double rel_tol, double floor,
                            SplitMix64& rng, const std::function<std::vector<int>()>& kinks) {
  for (const auto& [name, t] : inputs) {
    Tensor tt = t;
    tt.set_requires_grad(true);
    tt.zero_grad();
  }
  active_tape().clear();
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : inputs) {
    analytic.emplace_back(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
  }

  NoGradGuard guard;
  GradStats s;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor t = inputs[ti].second;
    std::vector<std::size_t> coords;
    if (t.numel() <= coords_per_tensor) {
      for (std::size_t i = 0; i < t.numel(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < coords_per_tensor; ++i) coords.push_back(rng.index(t.numel()));
    }
    for (const std::size_t idx : coords) {
      const double orig = t.values()[idx];
      t.mutable_values()[idx] = orig + h;
      const double fp = loss().item();
      std::vector<int> kp = kinks ? kinks() : std::vector<int>{};
      t.mutable_values()[idx] = orig - h;
      const double fm = loss().item();
      std::vector<int> km = kinks ? kinks() : std::vector<int>{};
      t.mutable_values()[idx] = orig;
      if (kp != km) {
        ++s.excluded;
        continue;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[ti][idx];
      const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), floor});
      ++s.checked;
      if (rel <= rel_tol) ++s.passed;
      if (rel > s.worst_rel) {
        s.worst_rel = rel;
        s.worst_name = inputs[ti].first + "[" + std::to_string(idx) + "]";
      }
    }
  }
  return s;
}

S3Model gradient_toy_model(std::uint64_t seed, MixerKind kind) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_resblocks = 1;
  cfg.n_blocks = 1;
  cfg.n_state = 4;
  cfg.sigma_hidden = 4;
  cfg.decoder_width = 8;
  cfg.decoder = kind;
  SplitMix64 rng(seed);
  return S3Model::create(cfg, rng);
}

void randomize_parameters(const S3Model& model, SplitMix64& rng) {
  for (const auto& [name, param] : model.parameters()) {
    Tensor t = param;
    auto v = t.mutable_values();
    const bool is_alog = name.size() >= 5 && name.compare(name.size() - 5, 5, "A_log") == 0;
    const bool is_gamma = name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
    std::size_t fan = 1;
    if (t.rank() == 2) fan = t.dim(0);
    if (t.rank() == 4) fan = t.dim(1) * t.dim(2) * t.dim(3);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan));
    for (double& x : v) {
      if (is_alog) {
        x += rng.uniform(-0.3, 0.3);
      } else if (is_gamma) {
        x = 1.0 + rng.uniform(-0.3, 0.3);
      } else if (t.rank() == 1) {
        x += rng.uniform(-0.2, 0.2);
      } else {
        x = rng.uniform(-1.0, 1.0) * scale;
      }
    }
  }
}

namespace {

struct OpCase {
  std::string name;
  std::function<Tensor()> loss;
  NamedTensors inputs;
};

// Random linear functional of an op's output, so every output entry matters.
Tensor project(const Tensor& y, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor r = Tensor::zeros(y.shape());
  for (double& v : r.mutable_values()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, r));
}

std::vector<OpCase> op_cases(SplitMix64& rng) {
  std::vector<OpCase> cases;
  const std::pair<const char*, UnaryOp> unary[] = {
      {"exp", UnaryOp::exp},         {"log", UnaryOp::log},   {"neg", UnaryOp::neg},
      {"silu", UnaryOp::silu},       {"sigmoid", UnaryOp::sigmoid}, {"softplus", UnaryOp::softplus},
      {"tanh", UnaryOp::tanh},       {"abs", UnaryOp::abs}};
  for (const auto& [name, op] : unary) {
    const bool positive = op == UnaryOp::log;
    Tensor x = random_tensor({3, 4}, rng, positive ? 0.2 : -2.0, 2.0);
    if (op == UnaryOp::abs)
      for (double& v : x.mutable_values()) v = (v < 0 ? -1.0 : 1.0) * (0.1 + std::fabs(v));
    const UnaryOp o = op;
    cases.push_back({std::string("unary.") + name, [x, o] { return project(elementwise(o, x), 11); }, {{"x", x}}});
  }
  const std::pair<const char*, BinaryOp> binary[] = {
      {"add", BinaryOp::add}, {"sub", BinaryOp::sub}, {"mul", BinaryOp::mul}, {"div", BinaryOp::div}};
  for (const auto& [name, op] : binary) {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng, 0.5, 2.0);
    Tensor c = random_tensor({1}, rng, 0.5, 2.0);
    const BinaryOp o = op;
    cases.push_back({std::string("binary.") + name,
                     [a, b, c, o] { return project(elementwise(o, elementwise(o, a, b), c), 12); },
                     {{"a", a}, {"b", b}, {"c", c}}});
  }
  {
    Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
    cases.push_back({"matmul", [a, b] { return sum(matmul(a, b)); }, {{"a", a}, {"b", b}}});
    Tensor x = random_tensor({5, 4}, rng), w = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng);
    cases.push_back({"linear", [x, w, bias] { return project(linear(x, w, bias), 13); },
                     {{"x", x}, {"w", w}, {"bias", bias}}});
  }
  for (const PaddingMode pad : {PaddingMode::zero, PaddingMode::replicate}) {
    const std::string p = pad == PaddingMode::zero ? "zero" : "replicate";
    Tensor x = random_tensor({1, 2, 4, 4}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    cases.push_back({"conv3x3." + p, [x, w, b, pad] { return project(conv2d(x, w, b, 1, pad), 14); },
                     {{"x", x}, {"w", w}, {"b", b}}});
    Tensor xd = random_tensor({2, 3, 4, 5}, rng);
    Tensor wd = random_tensor({3, 1, 3, 3}, rng), bd = random_tensor({3}, rng);
    cases.push_back({"conv_depthwise." + p, [xd, wd, bd, pad] { return project(conv2d(xd, wd, bd, 3, pad), 15); },
                     {{"x", xd}, {"w", wd}, {"b", bd}}});
  }
  {
    Tensor x = random_tensor({2, 4, 3}, rng), w = random_tensor({5, 2, 1, 1}, rng), b = random_tensor({5}, rng);
    cases.push_back({"conv1x1", [x, w, b] { return project(conv2d(x, w, b, 1, PaddingMode::zero), 16); },
                     {{"x", x}, {"w", w}, {"b", b}}});
    Tensor ln = random_tensor({4, 6}, rng, -2.0, 2.0), g = random_tensor({6}, rng), be = random_tensor({6}, rng);
    cases.push_back({"layer_norm", [ln, g, be] { return project(layer_norm(ln, g, be), 17); },
                     {{"x", ln}, {"gamma", g}, {"beta", be}}});
    Tensor m = random_tensor({4, 3}, rng), n = random_tensor({4, 2}, rng);
    const std::vector<std::size_t> idx = {3, 0, 3, 1, 2, 2};
    cases.push_back({"reshape_transpose_gather_concat",
                     [m, n, idx] {
                       const Tensor t = transpose(reshape(concat({m, n}, 1), {4, 5}));
                       return project(add(gather_rows(t, idx), mean(m)), 18);
                     },
                     {{"m", m}, {"n", n}}});
  }
  return cases;
}

}  // namespace

CheckResult check_gradients(const GradOptions& opt) {
  return timed("gradients", [&] {
    SplitMix64 rng(opt.seed);
    std::ostringstream detail;
    bool ok = true;
    std::size_t op_checked = 0, op_failed = 0;
    double op_worst = 0.0;
    std::string op_worst_name;

    auto run_case = [&](const std::string& name, const std::function<Tensor()>& loss, const NamedTensors& inputs,
                        std::size_t coords) {
      const GradStats s = finite_difference(loss, inputs, coords, opt.h, opt.rel_tol, opt.floor, rng);
      op_checked += s.checked;
      op_failed += s.checked - s.passed;
      if (s.worst_rel > op_worst) {
        op_worst = s.worst_rel;
        op_worst_name = name + ":" + s.worst_name;
      }
    };

    for (const auto& c : op_cases(rng)) run_case(c.name, c.loss, c.inputs, 64);

    // Scan with every step tensor and parameter as an input.
    {
      ssm::SsmConfig sc;
      sc.d_inner = 2;
      sc.n_state = 2;
      SplitMix64 prng(opt.seed + 1);
      ssm::SsmParams p = ssm::SsmParams::create(sc, prng);
      Tensor x = random_tensor({5, 2}, rng);
      Tensor dlt = random_tensor({5, 2}, rng, 0.1, 1.5);
      Tensor B = random_tensor({5, 2}, rng), C = random_tensor({5, 2}, rng);
      for (double& v : p.D.mutable_values()) v = rng.uniform(-1.0, 1.0);
      for (double& v : p.A_log.mutable_values()) v += rng.uniform(-0.3, 0.3);
      run_case("selective_scan",
               [=] { return project(ssm::selective_scan(x, ssm::ModulatedStep{dlt, B, C}, p), 19); },
               {{"x", x}, {"delta", dlt}, {"B", B}, {"C", C}, {"A_log", p.A_log}, {"D", p.D}}, 64);

      // Full SSSM with non-neutral heads.
      sc.d_inner = 3;
      sc.n_state = 2;
      sc.sigma_hidden = 3;
      ssm::SsmParams q = ssm::SsmParams::create(sc, prng);
      NamedTensors qp;
      q.collect("", qp);
      for (auto& [name, t] : qp) {
        Tensor tt = t;
        for (double& v : tt.mutable_values()) v += rng.uniform(-0.3, 0.3);
      }
      Tensor xs = random_tensor({6, 3}, rng);
      Tensor coords = random_tensor({6, 2}, rng);
      coords.set_requires_grad(false);
      qp.emplace_back("x", xs);
      run_case("sssm", [=] { return project(ssm::sssm(xs, ssm::ScaleContext{2.7, coords}, q), 20); }, qp, 64);
    }

    // One SSSM block on a 1x4x4x4 map.
    {
      BlockConfig bc;
      bc.d_model = 4;
      bc.n_state = 2;
      bc.sigma_hidden = 3;
      SplitMix64 brng(opt.seed + 2);
      SssmBlock block = SssmBlock::create(bc, brng);
      NamedTensors bp;
      block.collect("", bp);
      for (auto& [name, t] : bp) {
        Tensor tt = t;
        for (double& v : tt.mutable_values()) v += rng.uniform(-0.3, 0.3);
      }
      Tensor f = random_tensor({4, 4, 4}, rng);
      bp.emplace_back("f", f);
      run_case("sssm_block", [=] { return project(block(FeatureMap{f}, 3.1).values, 21); }, bp, 8);
    }

    const bool ops_ok = op_failed == 0;
    ok = ok && ops_ok;
    detail << "ops: " << op_checked - op_failed << "/" << op_checked << " coords within "
           << fmt("%.0e", opt.rel_tol) << " (worst " << fmt("%.2e", op_worst) << " at " << op_worst_name << ")";

    // End-to-end toy model with an L1 loss.
    {
      const S3Model model = gradient_toy_model(opt.seed + 3);
      SplitMix64 mrng(opt.seed + 4);
      randomize_parameters(model, mrng);
      Tensor lr = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
      std::vector<double> cv;
      for (std::size_t q = 0; q < 16; ++q) {
        cv.push_back(rng.uniform(-1.0, 1.0));
        cv.push_back(rng.uniform(-1.0, 1.0));
      }
      Tensor coords = Tensor::from({16, 2}, cv);
      Tensor target = random_tensor({16, 3}, rng, 0.0, 1.0);
      target.set_requires_grad(false);
      const double scale = 2.4;
      auto pred = [=] { return model.forward(lr, coords, scale); };
      auto loss = [=] { return l1_loss(pred(), target); };
      auto kinks = [=] {
        const Tensor p = pred();
        std::vector<int> sgn(p.numel());
        for (std::size_t i = 0; i < p.numel(); ++i) sgn[i] = p.values()[i] > target.values()[i] ? 1 : -1;
        return sgn;
      };
      NamedTensors inputs = model.parameters();
      inputs.emplace_back("lr", lr);
      const GradStats s =
          finite_difference(loss, inputs, opt.coords_per_tensor, opt.h, opt.rel_tol, opt.floor, rng, kinks);
      const double frac = s.checked ? static_cast<double>(s.passed) / static_cast<double>(s.checked) : 0.0;
      ok = ok && s.checked > 0 && frac >= opt.pass_fraction;
      detail << "; end-to-end: " << s.passed << "/" << s.checked << " coords (" << fmt("%.2f", 100.0 * frac)
             << "%, need " << fmt("%.0f", 100.0 * opt.pass_fraction) << "%), " << s.excluded
             << " excluded at L1 ties, worst " << fmt("%.2e", s.worst_rel) << " at " << s.worst_name;
    }
    CheckResult r;
    r.passed = ok;
    r.detail = detail.str();
    return r;
  });
}

// ---- resampler ----

CheckResult check_resampler(const ResampleOptions& opt) {
  return timed("resampler", [&] {
    SplitMix64 rng(5);
    double const_err = 0.0;
    const std::pair<std::size_t, std::size_t> sizes[] = {{8, 24}, {10, 25}, {24, 12}, {24, 8}, {17, 5}, {9, 9}, {7, 13}};
    for (const auto& [in, out] : sizes) {
      Image img(3, in, in + 1, 0.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = rng.uniform(0.0, 1.0);
        for (std::size_t y = 0; y < in; ++y)
          for (std::size_t x = 0; x <= in; ++x) img.at(c, y, x) = v;
      }
      const Image r = bicubic_resample(img, out, out + 2, false);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < out; ++y)
          for (std::size_t x = 0; x < out + 2; ++x)
            const_err = std::max(const_err, std::fabs(r.at(c, y, x) - img.at(c, 0, 0)));
    }

    // Affine images at interior points: upscaling at any ratio, integer-ratio
    // downscaling.
    double lin_err = 0.0;
    std::size_t lin_points = 0;
    const std::pair<std::size_t, std::size_t> lin_sizes[] = {{8, 24}, {10, 25}, {12, 17}, {24, 12}, {24, 8}, {32, 8}};
    for (const auto& [in, out] : lin_sizes) {
      const double ax = rng.uniform(-0.02, 0.02), ay = rng.uniform(-0.02, 0.02), c0 = 0.5;
      Image img(1, in, in);
      for (std::size_t y = 0; y < in; ++y)
        for (std::size_t x = 0; x < in; ++x) img.at(0, y, x) = c0 + ax * static_cast<double>(x) + ay * static_cast<double>(y);
      const Image r = bicubic_resample(img, out, out, false);
      const double ratio = static_cast<double>(in) / static_cast<double>(out);
      const double support = 2.0 * std::max(1.0, ratio);
      for (std::size_t y = 0; y < out; ++y)
        for (std::size_t x = 0; x < out; ++x) {
          const double sy = (static_cast<double>(y) + 0.5) * ratio - 0.5;
          const double sx = (static_cast<double>(x) + 0.5) * ratio - 0.5;
          const double lim = static_cast<double>(in - 1);
          if (sy - support < 0.0 || sx - support < 0.0 || sy + support > lim || sx + support > lim) continue;
          lin_err = std::max(lin_err, std::fabs(r.at(0, y, x) - (c0 + ax * sx + ay * sy)));
          ++lin_points;
        }
    }

    Image rnd(3, 8, 8);
    for (double& v : rnd.data) v = rng.uniform(0.0, 1.0);
    const Image got = bicubic_resample(rnd, 24, 24, false);
    const Image want = oracle::direct_resample(rnd, 24, 24);
    double direct_err = 0.0;
    for (std::size_t i = 0; i < got.data.size(); ++i) direct_err = std::max(direct_err, std::fabs(got.data[i] - want.data[i]));

    CheckResult r;
    r.passed = const_err <= opt.precision_tol && lin_err <= opt.precision_tol && lin_points > 0 &&
               direct_err <= opt.direct_tol;
    r.detail = "constant max err " + fmt("%.2e", const_err) + ", linear precision max err " + fmt("%.2e", lin_err) +
               " over " + std::to_string(lin_points) + " interior points (tol " + fmt("%.0e", opt.precision_tol) +
               "), direct 8x8->24x24 max err " + fmt("%.2e", direct_err) + " (tol " + fmt("%.0e", opt.direct_tol) + ")";
    return r;
  });
}

// ---- metrics ----

CheckResult check_metrics(const MetricOptions& opt) {
  return timed("metrics", [&] {
    SplitMix64 rng(6);
    Image gt(3, 32, 32);
    for (double& v : gt.data) v = rng.uniform(0.1, 0.8);
    Image pred = gt;
    for (double& v : pred.data) v += 10.0 / 255.0;
    const double want_psnr = 20.0 * std::log10(255.0 / 10.0);
    const double got_psnr = psnr(pred, gt, PsnrMode::rgb, 0);
    const double psnr_err = std::fabs(got_psnr - want_psnr);
    const double rounded_err = std::fabs(got_psnr - 28.1308);

    const double same = ssim(gt, gt, 0);

    // Constant gray images: only the luminance term differs from 1.
    const double a = 0.2, b = 0.7;
    Image ia(3, 16, 16, a), ib(3, 16, 16, b);
    const double gray = 65.481 + 128.553 + 24.966;
    const double ya = (gray * a + 16.0) / 255.0, yb = (gray * b + 16.0) / 255.0;
    const double C1 = 1e-4;
    const double want_ssim = (2 * ya * yb + C1) / (ya * ya + yb * yb + C1);
    const double ssim_err = std::fabs(ssim(ia, ib, 0) - want_ssim);

    // Checkerboard against its inverse is anti-correlated.
    Image cb(3, 16, 16), inv(3, 16, 16);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) {
          cb.at(c, y, x) = static_cast<double>((x + y) % 2);
          inv.at(c, y, x) = 1.0 - cb.at(c, y, x);
        }
    const double anti = ssim(cb, inv, 0);

    CheckResult r;
    r.passed = psnr_err <= opt.psnr_tol && rounded_err <= 5e-5 && same == 1.0 && ssim_err <= opt.ssim_tol &&
               anti < 0.0 && psnr(gt, gt, PsnrMode::rgb, 0) == kPsnrCap;
    r.detail = "psnr(10/255 offset) = " + fmt("%.6f", got_psnr) + " dB (err " + fmt("%.1e", psnr_err) +
               "), ssim(x,x) = " + fmt("%.15f", same) + ", constant-image ssim err " + fmt("%.1e", ssim_err) +
               ", checkerboard ssim " + fmt("%.4f", anti);
    return r;
  });
}

// ---- identity at init ----

CheckResult check_identity_at_init(const IdentityOptions& opt) {
  return timed("identity-at-init", [&] {
    SplitMix64 rng(opt.seed);
    double worst = 0.0;
    for (std::size_t i = 0; i < opt.pairs; ++i) {
      ssm::SsmConfig sc;
      sc.d_inner = 1 + rng.index(12);
      sc.n_state = 1 + rng.index(8);
      sc.scale_modulation = true;
      SplitMix64 prng(mix_seed(opt.seed, i));
      const ssm::SsmParams scaled = ssm::SsmParams::create(sc, prng);
      ssm::SsmParams blind = scaled;
      blind.delta_head.reset();
      blind.b_head.reset();
      blind.config.scale_modulation = false;

      const std::size_t L = 1 + rng.index(64);
      Tensor x = Tensor::zeros({L, sc.d_inner});
      for (double& v : x.mutable_values()) v = rng.normal();
      Tensor coords = Tensor::zeros({L, 2});
      for (double& v : coords.mutable_values()) v = rng.uniform(-1.0, 1.0);
      const double scale = std::exp(rng.uniform(std::log(0.5), std::log(12.0)));
      NoGradGuard g;
      const Tensor a = ssm::sssm(x, ssm::ScaleContext{scale, coords}, scaled);
      const Tensor b = ssm::sssm(x, ssm::ScaleContext{scale, coords}, blind);
      for (std::size_t k = 0; k < a.numel(); ++k) worst = std::max(worst, std::fabs(a.values()[k] - b.values()[k]));
    }
    CheckResult r;
    r.passed = worst <= opt.tol;
    r.detail = std::to_string(opt.pairs) + " (input, scale) pairs, max |SSSM - SSM| = " + fmt("%.3e", worst) +
               " (tol " + fmt("%.0e", opt.tol) + ")";
    return r;
  });
}

std::vector<CheckResult> run_all(const VerifyOptions& opt, const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  auto push = [&](CheckResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  ZohOptions z;
  z.perturbation = opt.zoh_perturbation;
  push(check_zoh(z));
  push(check_scan(ScanOptions{}));
  push(check_gradients(GradOptions{}));
  push(check_resampler(ResampleOptions{}));
  push(check_metrics(MetricOptions{}));
  push(check_identity_at_init(IdentityOptions{}));
  return out;
}

}  // namespace s3::verify
