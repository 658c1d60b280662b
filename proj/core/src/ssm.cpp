#include "s3mamba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

#include "s3mamba/autodiff.hpp"
#include "s3mamba/ops.hpp"

namespace s3::ssm {

namespace {

// Below this |z| the derivative of phi1 uses its series.
constexpr double kDerivativeSeriesThreshold = 1e-2;

struct ZohFactors {
  double a_bar;
  double phi;
};

// One transcendental per call: expm1 near 0 (no cancellation in phi), exp
// elsewhere (full relative precision of a_bar for strongly negative z).
inline ZohFactors zoh_factors(double z) {
  if (std::fabs(z) < 0.5) {
    const double em = std::expm1(z);
    const double phi = std::fabs(z) < kTaylorThreshold ? 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0))
                                                       : em / z;
    return {1.0 + em, phi};
  }
  const double e = std::exp(z);
  return {e, (e - 1.0) / z};
}

inline double phi1_derivative_from(double z, double a_bar, double phi) {
  if (std::fabs(z) < kDerivativeSeriesThreshold) {
    return 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 + z * (1.0 / 144.0 + z / 840.0))));
  }
  return (a_bar - phi) / z;
}

void check_step_shapes(const Tensor& x, const ModulatedStep& step, const SsmParams& params) {
  const std::size_t Din = params.d_inner(), N = params.n_state();
  if (x.rank() != 2 || x.dim(1) != Din) {
    throw ShapeError("selective_scan: x must be [L, " + std::to_string(Din) + "], got " +
                     shape_str(x.shape()));
  }
  const std::size_t L = x.dim(0);
  if (step.delta.shape() != Shape{L, Din}) throw ShapeError("selective_scan: delta shape " + shape_str(step.delta.shape()));
  if (step.B.shape() != Shape{L, N}) throw ShapeError("selective_scan: B shape " + shape_str(step.B.shape()));
  if (step.C.shape() != Shape{L, N}) throw ShapeError("selective_scan: C shape " + shape_str(step.C.shape()));
}

}  // namespace

double phi1(double z) { return zoh_factors(z).phi; }

double phi1_derivative(double z) {
  const ZohFactors f = zoh_factors(z);
  return phi1_derivative_from(z, f.a_bar, f.phi);
}

ZohResult zoh_discretize(double a, double b, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::domain_error("zoh_discretize: step size must be positive and finite");
  }
  const ZohFactors f = zoh_factors(delta * a);
  return {f.a_bar, delta * b * f.phi};
}

Tensor ScaleHead::operator()(const Tensor& features) const { return out(silu(hidden(features))); }

SsmParams SsmParams::create(const SsmConfig& config, SplitMix64& rng) {
  if (config.d_inner < 1 || config.n_state < 1 || config.dt_rank < 1) {
    throw std::invalid_argument("SsmParams: d_inner, n_state and dt_rank must be >= 1");
  }
  SsmParams p;
  p.config = config;
  const std::size_t Din = config.d_inner, N = config.n_state;
  p.A_log = Tensor::zeros({Din, N}, true);
  auto alog = p.A_log.mutable_values();
  for (std::size_t d = 0; d < Din; ++d)
    for (std::size_t n = 0; n < N; ++n) alog[d * N + n] = std::log(static_cast<double>(n + 1));
  p.D = Tensor::full({Din}, 1.0, true);
  p.proj_B = nn::Linear::create(Din, N, rng, false);
  p.proj_C = nn::Linear::create(Din, N, rng, false);
  p.proj_dt_low = nn::Linear::create(Din, config.dt_rank, rng, false);
  p.proj_dt = nn::Linear::create(config.dt_rank, Din, rng, true);
  const double dt_bias = std::log(std::exp(1.0) - 1.0);
  for (double& v : p.proj_dt.bias.mutable_values()) v = dt_bias;
  if (config.scale_modulation) {
    p.delta_head = ScaleHead{nn::Linear::create(4, config.sigma_hidden, rng),
                             nn::Linear::zeros(config.sigma_hidden, Din)};
    p.b_head = ScaleHead{nn::Linear::create(4, config.sigma_hidden, rng),
                         nn::Linear::zeros(config.sigma_hidden, N)};
  }
  return p;
}

Tensor SsmParams::A_values() const {
  Tensor a = A_log.detach();
  for (double& v : a.mutable_values()) v = -std::exp(v);
  return a;
}

void SsmParams::collect(const std::string& prefix, NamedTensors& out) const {
  nn::add_param(out, prefix, "A_log", A_log);
  nn::add_param(out, prefix, "D", D);
  proj_B.collect(prefix + "proj_B.", out);
  proj_C.collect(prefix + "proj_C.", out);
  proj_dt_low.collect(prefix + "proj_dt_low.", out);
  proj_dt.collect(prefix + "proj_dt.", out);
  if (delta_head) {
    delta_head->hidden.collect(prefix + "sigma_delta.hidden.", out);
    delta_head->out.collect(prefix + "sigma_delta.out.", out);
  }
  if (b_head) {
    b_head->hidden.collect(prefix + "sigma_B.hidden.", out);
    b_head->out.collect(prefix + "sigma_B.out.", out);
  }
}

void ScaleContext::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("ScaleContext: scale must be positive, got " + std::to_string(scale));
  }
  if (coords.rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("ScaleContext: coords must be [L, 2], got " + shape_str(coords.shape()));
  }
  constexpr double kSlack = 1e-9;
  for (double c : coords.values()) {
    if (!(c >= -1.0 - kSlack && c <= 1.0 + kSlack)) {
      throw std::invalid_argument("ScaleContext: coordinate " + std::to_string(c) + " outside [-1, 1]");
    }
  }
}

Tensor scale_features(const ScaleContext& ctx) {
  ctx.validate();
  const std::size_t L = ctx.length();
  Tensor f = Tensor::zeros({L, 4});
  auto v = f.mutable_values();
  auto c = ctx.coords.values();
  for (std::size_t i = 0; i < L; ++i) {
    v[i * 4 + 0] = ctx.scale;
    v[i * 4 + 1] = 1.0 / ctx.scale;
    v[i * 4 + 2] = c[i * 2 + 0];
    v[i * 4 + 3] = c[i * 2 + 1];
  }
  return f;
}

InputProjections compute_input_projections(const Tensor& x, const SsmParams& params) {
  if (x.rank() != 2 || x.dim(1) != params.d_inner() || x.dim(0) < 1) {
    throw ShapeError("compute_input_projections: x must be [L>=1, " +
                     std::to_string(params.d_inner()) + "], got " + shape_str(x.shape()));
  }
  InputProjections p;
  p.B = params.proj_B(x);
  p.C = params.proj_C(x);
  p.delta = softplus(params.proj_dt(params.proj_dt_low(x)));
  return p;
}

ScaleModulation compute_scale_modulation(const ScaleContext& ctx, const SsmParams& params) {
  if (!params.delta_head || !params.b_head) {
    throw std::invalid_argument("compute_scale_modulation: parameters carry no scale heads");
  }
  const Tensor features = scale_features(ctx);
  ScaleModulation m;
  m.delta_scale = exp((*params.delta_head)(features));
  m.b_scale = add_scalar((*params.b_head)(features), 1.0);
  return m;
}

ModulatedStep modulate(const InputProjections& proj, const ScaleModulation& mod) {
  if (proj.delta.shape() != mod.delta_scale.shape() || proj.B.shape() != mod.b_scale.shape()) {
    throw ShapeError("modulate: modulation shapes do not match the projections");
  }
  return {mul(proj.delta, mod.delta_scale), mul(proj.B, mod.b_scale), proj.C};
}

ModulatedStep unmodulated(const InputProjections& proj) { return {proj.delta, proj.B, proj.C}; }

DiscretizedStep discretize(const ModulatedStep& step, const Tensor& A) {
  const std::size_t L = step.delta.dim(0), Din = step.delta.dim(1), N = step.B.dim(1);
  if (A.shape() != Shape{Din, N}) throw ShapeError("discretize: A shape " + shape_str(A.shape()));
  DiscretizedStep out{Tensor::zeros({L, Din, N}), Tensor::zeros({L, Din, N})};
  auto ab = out.a_bar.mutable_values();
  auto bb = out.b_bar.mutable_values();
  auto dv = step.delta.values();
  auto Bv = step.B.values();
  auto Av = A.values();
  for (std::size_t k = 0; k < L; ++k)
    for (std::size_t d = 0; d < Din; ++d)
      for (std::size_t n = 0; n < N; ++n) {
        const ZohResult r = zoh_discretize(Av[d * N + n], Bv[k * N + n], dv[k * Din + d]);
        ab[(k * Din + d) * N + n] = r.a_bar;
        bb[(k * Din + d) * N + n] = r.b_bar;
      }
  return out;
}

void scan_sequential(const ScanView& v, std::span<double> y, std::span<double> states) {
  const std::size_t L = v.length, Din = v.d_inner, N = v.n_state;
  std::vector<double> h(Din * N, 0.0);
  const bool keep = !states.empty();
  for (std::size_t k = 0; k < L; ++k) {
    const double* Bk = v.B.data() + k * N;
    const double* Ck = v.C.data() + k * N;
    for (std::size_t d = 0; d < Din; ++d) {
      const double xd = v.x[k * Din + d];
      const double dt = v.delta[k * Din + d];
      const double* a = v.A.data() + d * N;
      double* hd = h.data() + d * N;
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const ZohFactors f = zoh_factors(dt * a[n]);
        hd[n] = f.a_bar * hd[n] + dt * Bk[n] * f.phi * xd;
        acc += Ck[n] * hd[n];
      }
      y[k * Din + d] = acc + v.D[d] * xd;
      if (keep) std::copy(hd, hd + N, states.data() + (k * Din + d) * N);
    }
  }
}

void scan_blocked(const ScanView& v, std::span<double> y, std::size_t block, std::size_t threads) {
  const std::size_t L = v.length, Din = v.d_inner, N = v.n_state;
  const std::size_t S = Din * N;
  if (block == 0) block = 64;
  const std::size_t nblocks = (L + block - 1) / block;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(nblocks, 1));

  // Per-step discretized maps, computed once and reused by both passes.
  std::vector<double> abar(L * S), bx(L * S);
  // Per-block composite affine map h_out = P h_in + Q.
  std::vector<double> P(nblocks * S), Q(nblocks * S);

  auto summarize = [&](std::size_t j) {
    const std::size_t k0 = j * block, k1 = std::min(L, k0 + block);
    double* Pj = P.data() + j * S;
    double* Qj = Q.data() + j * S;
    std::fill(Pj, Pj + S, 1.0);
    std::fill(Qj, Qj + S, 0.0);
    for (std::size_t k = k0; k < k1; ++k) {
      for (std::size_t d = 0; d < Din; ++d) {
        const double xd = v.x[k * Din + d];
        const double dt = v.delta[k * Din + d];
        for (std::size_t n = 0; n < N; ++n) {
          const ZohFactors f = zoh_factors(dt * v.A[d * N + n]);
          const std::size_t s = d * N + n;
          const double a = f.a_bar;
          const double b = dt * v.B[k * N + n] * f.phi * xd;
          abar[k * S + s] = a;
          bx[k * S + s] = b;
          // (P, Q) o (a, b) = (P a, a Q + b)
          Pj[s] *= a;
          Qj[s] = a * Qj[s] + b;
        }
      }
    }
  };

  std::vector<double> carry(nblocks * S, 0.0);  // state entering each block
  auto emit = [&](std::size_t j) {
    const std::size_t k0 = j * block, k1 = std::min(L, k0 + block);
    std::vector<double> h(carry.begin() + static_cast<std::ptrdiff_t>(j * S),
                          carry.begin() + static_cast<std::ptrdiff_t>((j + 1) * S));
    for (std::size_t k = k0; k < k1; ++k) {
      for (std::size_t d = 0; d < Din; ++d) {
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t s = d * N + n;
          h[s] = abar[k * S + s] * h[s] + bx[k * S + s];
          acc += v.C[k * N + n] * h[s];
        }
        y[k * Din + d] = acc + v.D[d] * v.x[k * Din + d];
      }
    }
  };

  auto parallel_for = [&](auto&& fn) {
    if (threads <= 1) {
      for (std::size_t j = 0; j < nblocks; ++j) fn(j);
      return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t j = t; j < nblocks; j += threads) fn(j);
      });
    }
  };

  parallel_for(summarize);
  for (std::size_t j = 1; j < nblocks; ++j) {
    for (std::size_t s = 0; s < S; ++s) {
      carry[j * S + s] = P[(j - 1) * S + s] * carry[(j - 1) * S + s] + Q[(j - 1) * S + s];
    }
  }
  parallel_for(emit);
}

namespace {

ScanView make_view(const Tensor& x, const ModulatedStep& step, const Tensor& A, const Tensor& D) {
  ScanView v;
  v.x = x.values();
  v.delta = step.delta.values();
  v.B = step.B.values();
  v.C = step.C.values();
  v.A = A.values();
  v.D = D.values();
  v.length = x.dim(0);
  v.d_inner = x.dim(1);
  v.n_state = step.B.dim(1);
  return v;
}

}  // namespace

Tensor scan_parallel(const Tensor& x, const ModulatedStep& step, const SsmParams& params,
                     std::size_t block, std::size_t threads) {
  check_step_shapes(x, step, params);
  const Tensor A = params.A_values();
  Tensor y = Tensor::zeros(x.shape());
  scan_blocked(make_view(x, step, A, params.D), y.mutable_values(), block, threads);
  return y;
}

Tensor selective_scan(const Tensor& x, const ModulatedStep& step, const SsmParams& params) {
  check_step_shapes(x, step, params);
  const std::size_t L = x.dim(0), Din = params.d_inner(), N = params.n_state();
  const Tensor A = params.A_values();
  Tensor y = Tensor::zeros({L, Din});

  const bool record = autograd::needs_grad(
      {&x, &step.delta, &step.B, &step.C, &params.A_log, &params.D});
  if (!record) {
    scan_sequential(make_view(x, step, A, params.D), y.mutable_values());
    autograd::check_finite(y, "selective_scan");
    return y;
  }

  // Saved for backward: hidden states, a_bar and phi1 per (k, d, n).
  const std::size_t S = Din * N;
  auto hs = std::make_shared<std::vector<double>>(L * S);
  auto abar = std::make_shared<std::vector<double>>(L * S);
  auto phis = std::make_shared<std::vector<double>>(L * S);
  {
    const double* xv = x.values().data();
    const double* dv = step.delta.values().data();
    const double* Bv = step.B.values().data();
    const double* Cv = step.C.values().data();
    const double* Av = A.values().data();
    const double* Dv = params.D.values().data();
    double* yv = y.mutable_values().data();
    std::vector<double> h(S, 0.0);
    for (std::size_t k = 0; k < L; ++k) {
      for (std::size_t d = 0; d < Din; ++d) {
        const double xd = xv[k * Din + d];
        const double dt = dv[k * Din + d];
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t s = d * N + n;
          const ZohFactors f = zoh_factors(dt * Av[s]);
          h[s] = f.a_bar * h[s] + dt * Bv[k * N + n] * f.phi * xd;
          acc += Cv[k * N + n] * h[s];
          (*abar)[k * S + s] = f.a_bar;
          (*phis)[k * S + s] = f.phi;
        }
        yv[k * Din + d] = acc + Dv[d] * xd;
      }
      std::copy(h.begin(), h.end(), hs->begin() + static_cast<std::ptrdiff_t>(k * S));
    }
  }
  autograd::check_finite(y, "selective_scan");

  autograd::attach(y, [L, Din, N, S, hs, abar, phis, A, xi = x.impl(), di = step.delta.impl(),
                       bi = step.B.impl(), ci = step.C.impl(), ali = params.A_log.impl(),
                       Di = params.D.impl(), yi = y.impl()] {
    if (yi->grad.empty()) return;
    const double* gy = yi->grad.data();
    const double* xv = xi->data.data();
    const double* dv = di->data.data();
    const double* Bv = bi->data.data();
    const double* Cv = ci->data.data();
    const double* Av = A.values().data();
    const double* Dv = Di->data.data();

    std::vector<double> gx(L * Din, 0.0), gdelta(L * Din, 0.0), gB(L * N, 0.0), gC(L * N, 0.0);
    std::vector<double> gA(S, 0.0), gD(Din, 0.0);
    std::vector<double> dh(S, 0.0);  // dL/dh_k, carried backwards

    for (std::size_t kk = L; kk-- > 0;) {
      const double* hk = hs->data() + kk * S;
      const double* hprev = kk > 0 ? hs->data() + (kk - 1) * S : nullptr;
      for (std::size_t d = 0; d < Din; ++d) {
        const double g = gy[kk * Din + d];
        const double xd = xv[kk * Din + d];
        const double dt = dv[kk * Din + d];
        gD[d] += g * xd;
        double gxd = g * Dv[d];
        double gdt = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t s = d * N + n;
          const double a = Av[s];
          const double b = Bv[kk * N + n];
          const double ab = (*abar)[kk * S + s];
          const double phi = (*phis)[kk * S + s];
          gC[kk * N + n] += g * hk[s];
          const double dhs = dh[s] + g * Cv[kk * N + n];
          const double hp = hprev ? hprev[s] : 0.0;
          const double d_abar = dhs * hp;
          const double d_bbar = dhs * xd;
          const double bbar = dt * b * phi;
          gxd += dhs * bbar;
          const double z = dt * a;
          const double dz = d_abar * ab + d_bbar * dt * b * phi1_derivative_from(z, ab, phi);
          gdt += d_bbar * b * phi + dz * a;
          gB[kk * N + n] += d_bbar * dt * phi;
          gA[s] += dz * dt;
          dh[s] = ab * dhs;
        }
        gx[kk * Din + d] += gxd;
        gdelta[kk * Din + d] += gdt;
      }
    }

    auto accumulate = [](const std::shared_ptr<detail::TensorImpl>& t, const std::vector<double>& g) {
      if (!t->requires_grad) return;
      auto& dst = t->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    };
    accumulate(xi, gx);
    accumulate(di, gdelta);
    accumulate(bi, gB);
    accumulate(ci, gC);
    accumulate(Di, gD);
    if (ali->requires_grad) {
      // a = -exp(A_log) => da/dA_log = a
      auto& dst = ali->ensure_grad();
      for (std::size_t s = 0; s < S; ++s) dst[s] += gA[s] * Av[s];
    }
  });
  return y;
}

Tensor sssm(const Tensor& x, const ScaleContext& ctx, const SsmParams& params) {
  const InputProjections proj = compute_input_projections(x, params);
  if (!params.modulated()) return selective_scan(x, unmodulated(proj), params);
  if (ctx.length() != x.dim(0)) {
    throw ShapeError("sssm: " + std::to_string(ctx.length()) + " coordinates for a sequence of length " +
                     std::to_string(x.dim(0)));
  }
  return selective_scan(x, modulate(proj, compute_scale_modulation(ctx, params)), params);
}

}  // namespace s3::ssm
