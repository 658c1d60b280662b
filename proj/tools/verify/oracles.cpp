#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace s3::oracle {

namespace {

using M2 = long double[2][2];

void mul(const M2 x, const M2 y, M2 out) {
  long double r[2][2];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out[i][j] = r[i][j];
}

void expm(const M2 m, M2 out) {
  long double norm = std::fabs(m[0][0]) + std::fabs(m[0][1]) + std::fabs(m[1][0]) + std::fabs(m[1][1]);
  int squarings = 0;
  while (norm > 0.25L) {
    norm /= 2;
    ++squarings;
  }
  const long double s = std::ldexp(1.0L, -squarings);
  M2 x = {{m[0][0] * s, m[0][1] * s}, {m[1][0] * s, m[1][1] * s}};
  M2 term = {{1, 0}, {0, 1}};
  M2 sum = {{1, 0}, {0, 1}};
  for (int k = 1; k <= 30; ++k) {
    mul(term, x, term);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        term[i][j] /= k;
        sum[i][j] += term[i][j];
      }
  }
  for (int i = 0; i < squarings; ++i) mul(sum, sum, sum);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out[i][j] = sum[i][j];
}

long double exp_series(long double z) {
  M2 m = {{z, 0}, {0, 0}}, e;
  expm(m, e);
  return e[0][0];
}

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr long double kNodes[5] = {0.1488743389816312108848260L, 0.4333953941292471907992659L,
                                   0.6794095682990244062343274L, 0.8650633666889845107320967L,
                                   0.9739065285171717200779640L};
constexpr long double kWeights[5] = {0.2955242247147528701738930L, 0.2692667193099963550912269L,
                                     0.2190863625159820439955349L, 0.1494513491505805931457763L,
                                     0.0666713443086881375935688L};

}  // namespace

Zoh zoh_matrix_exponential(double a, double b, double delta) {
  M2 m = {{static_cast<long double>(a) * delta, static_cast<long double>(b) * delta}, {0, 0}}, e;
  expm(m, e);
  return {e[0][0], e[0][1]};
}

Zoh zoh_quadrature(double a, double b, double delta, int panels) {
  const long double A = a, D = delta;
  const long double h = D / panels;
  long double integral = 0;
  for (int p = 0; p < panels; ++p) {
    const long double mid = (p + 0.5L) * h;
    long double acc = 0;
    for (int k = 0; k < 5; ++k) {
      const long double off = 0.5L * h * kNodes[k];
      acc += kWeights[k] * (std::exp(A * (mid - off)) + std::exp(A * (mid + off)));
    }
    integral += 0.5L * h * acc;
  }
  return {exp_series(A * D), integral * b};
}

std::vector<double> dense_scan(const ScanProblem& p) {
  const std::size_t L = p.length, Din = p.d_inner, N = p.n_state;
  std::vector<long double> abar(L * Din * N), bbar(L * Din * N);
  for (std::size_t k = 0; k < L; ++k)
    for (std::size_t d = 0; d < Din; ++d)
      for (std::size_t n = 0; n < N; ++n) {
        const Zoh z = zoh_matrix_exponential(p.A[d * N + n], p.B[k * N + n], p.delta[k * Din + d]);
        abar[(k * Din + d) * N + n] = z.a_bar;
        bbar[(k * Din + d) * N + n] = z.b_bar;
      }
  std::vector<double> y(L * Din);
  for (std::size_t d = 0; d < Din; ++d) {
    // Dense kernel for this channel.
    std::vector<long double> K(L * L, 0.0L);
    for (std::size_t k = 0; k < L; ++k)
      for (std::size_t j = 0; j <= k; ++j) {
        long double acc = 0;
        for (std::size_t n = 0; n < N; ++n) {
          long double prod = 1;
          for (std::size_t i = j + 1; i <= k; ++i) prod *= abar[(i * Din + d) * N + n];
          acc += p.C[k * N + n] * prod * bbar[(j * Din + d) * N + n];
        }
        K[k * L + j] = acc;
      }
    for (std::size_t k = 0; k < L; ++k) {
      long double acc = static_cast<long double>(p.D[d]) * p.x[k * Din + d];
      for (std::size_t j = 0; j <= k; ++j) acc += K[k * L + j] * p.x[j * Din + d];
      y[k * Din + d] = static_cast<double>(acc);
    }
  }
  return y;
}

namespace {

long double cubic(long double x) {
  const long double a = -0.5L;
  const long double t = std::fabs(x);
  if (t <= 1) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
  if (t < 2) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
  return 0;
}

// Weight of every source index (after replicate folding) for one output.
std::vector<long double> axis_weights(std::size_t in, std::size_t out, std::size_t dst) {
  const long double ratio = static_cast<long double>(in) / out;
  const long double stretch = std::max<long double>(1, ratio);
  const long double center = (dst + 0.5L) * ratio - 0.5L;
  std::vector<long double> w(in, 0);
  const long reach = static_cast<long>(std::ceil(2 * stretch)) + 2;
  for (long i = static_cast<long>(std::floor(center)) - reach; i <= static_cast<long>(std::floor(center)) + reach; ++i) {
    const long src = std::clamp(i, 0L, static_cast<long>(in) - 1);
    w[static_cast<std::size_t>(src)] += cubic((i - center) / stretch);
  }
  return w;
}

}  // namespace

Image direct_resample(const Image& img, std::size_t out_h, std::size_t out_w) {
  Image out(img.channels, out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto wy = axis_weights(img.height, out_h, y);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto wx = axis_weights(img.width, out_w, x);
      for (std::size_t c = 0; c < img.channels; ++c) {
        long double acc = 0, total = 0;
        for (std::size_t i = 0; i < img.height; ++i)
          for (std::size_t j = 0; j < img.width; ++j) {
            const long double w = wy[i] * wx[j];
            acc += w * img.at(c, i, j);
            total += w;
          }
        out.at(c, y, x) = static_cast<double>(acc / total);
      }
    }
  }
  return out;
}

}  // namespace s3::oracle
