#include "s3mamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "s3mamba/autodiff.hpp"

namespace s3 {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Reduces a gradient of the broadcast shape down onto an operand holding
// `n_small` elements repeated along leading dimensions.
void reduce_into(std::vector<double>& dst, const std::vector<double>& src, double scale = 1.0) {
  const std::size_t n = dst.size();
  if (n == src.size()) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += scale * src[i];
    return;
  }
  for (std::size_t i = 0; i < src.size(); ++i) dst[i % n] += scale * src[i];
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (a == b) return a;
  if (nb == 1 && b.size() <= a.size()) return a;
  if (na == 1 && a.size() <= b.size()) return b;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError("elementwise: shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not broadcast-compatible");
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  const std::size_t n = a.numel();
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.values().data();
  double* y = out.mutable_values().data();
  switch (op) {
    case UnaryOp::exp:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
      break;
    case UnaryOp::log:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
      break;
    case UnaryOp::neg:
      for (std::size_t i = 0; i < n; ++i) y[i] = -x[i];
      break;
    case UnaryOp::silu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * sigmoid_scalar(x[i]);
      break;
    case UnaryOp::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid_scalar(x[i]);
      break;
    case UnaryOp::softplus:
      for (std::size_t i = 0; i < n; ++i) y[i] = softplus_scalar(x[i]);
      break;
    case UnaryOp::tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case UnaryOp::abs:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::fabs(x[i]);
      break;
  }
  autograd::check_finite(out, "elementwise");

  if (autograd::needs_grad({&a})) {
    autograd::attach(out, [op, ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const auto& x = ai->data;
      const auto& y = oi->data;
      auto& gx = ai->ensure_grad();
      const std::size_t n = g.size();
      switch (op) {
        case UnaryOp::exp:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
          break;
        case UnaryOp::log:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x[i];
          break;
        case UnaryOp::neg:
          for (std::size_t i = 0; i < n; ++i) gx[i] -= g[i];
          break;
        case UnaryOp::silu:
          for (std::size_t i = 0; i < n; ++i) {
            const double s = sigmoid_scalar(x[i]);
            gx[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
          }
          break;
        case UnaryOp::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
        case UnaryOp::softplus:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * sigmoid_scalar(x[i]);
          break;
        case UnaryOp::tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case UnaryOp::abs:
          for (std::size_t i = 0; i < n; ++i) {
            const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
            gx[i] += g[i] * s;
          }
          break;
      }
    });
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const Shape shape = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::zeros(shape);
  const std::size_t n = out.numel();
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  const double* x = a.values().data();
  const double* z = b.values().data();
  double* y = out.mutable_values().data();

  if (op == BinaryOp::div && debug_checks()) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (z[j] == 0.0) throw NumericError("elementwise div: division by zero");
    }
  }

  auto run = [&](auto f) {
    if (na == n && nb == n) {
      for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i], z[i]);
    } else if (na == n) {
      for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i], z[i % nb]);
    } else {
      for (std::size_t i = 0; i < n; ++i) y[i] = f(x[i % na], z[i]);
    }
  };
  switch (op) {
    case BinaryOp::add: run([](double p, double q) { return p + q; }); break;
    case BinaryOp::sub: run([](double p, double q) { return p - q; }); break;
    case BinaryOp::mul: run([](double p, double q) { return p * q; }); break;
    case BinaryOp::div: run([](double p, double q) { return p / q; }); break;
  }
  autograd::check_finite(out, "elementwise");

  if (autograd::needs_grad({&a, &b})) {
    autograd::attach(out, [op, ai = a.impl(), bi = b.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const std::size_t n = g.size();
      const std::size_t na = ai->data.size();
      const std::size_t nb = bi->data.size();
      const auto& x = ai->data;
      const auto& z = bi->data;
      switch (op) {
        case BinaryOp::add:
          if (ai->requires_grad) reduce_into(ai->ensure_grad(), g);
          if (bi->requires_grad) reduce_into(bi->ensure_grad(), g);
          break;
        case BinaryOp::sub:
          if (ai->requires_grad) reduce_into(ai->ensure_grad(), g);
          if (bi->requires_grad) reduce_into(bi->ensure_grad(), g, -1.0);
          break;
        case BinaryOp::mul:
          if (ai->requires_grad) {
            auto& ga = ai->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * z[i % nb];
          }
          if (bi->requires_grad) {
            auto& gb = bi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * x[i % na];
          }
          break;
        case BinaryOp::div:
          if (ai->requires_grad) {
            auto& ga = ai->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] / z[i % nb];
          }
          if (bi->requires_grad) {
            auto& gb = bi->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
              const double q = z[i % nb];
              gb[i % nb] -= g[i] * x[i % na] / (q * q);
            }
          }
          break;
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + c;
  if (autograd::needs_grad({&a})) {
    autograd::attach(out, [ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto& gx = ai->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * c;
  if (autograd::needs_grad({&a})) {
    autograd::attach(out, [c, ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto& gx = ai->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * oi->grad[i];
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  return linear(a, b);
}

Tensor linear(const Tensor& x, const Tensor& weight) { return linear(x, weight, Tensor::zeros({0})); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t M = x.dim(0), K = x.dim(1), N = weight.dim(1);
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != N)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(N) + " outputs");
  }
  Tensor out = Tensor::zeros({M, N});
  double* y = out.mutable_values().data();
  if (has_bias) {
    const double* bv = bias.values().data();
    for (std::size_t i = 0; i < M; ++i) std::copy(bv, bv + N, y + i * N);
  }
  kernels::gemm_nn(M, N, K, x.values().data(), weight.values().data(), y);
  autograd::check_finite(out, "linear");

  if (autograd::needs_grad({&x, &weight, has_bias ? &bias : nullptr})) {
    autograd::attach(out, [M, K, N, has_bias, xi = x.impl(), wi = weight.impl(), bi = bias.impl(),
                           oi = out.impl()] {
      if (oi->grad.empty()) return;
      const double* g = oi->grad.data();
      if (xi->requires_grad) {
        // dX = dY * W^T
        kernels::gemm_nt(M, K, N, g, wi->data.data(), xi->ensure_grad().data());
      }
      if (wi->requires_grad) {
        // dW = X^T * dY
        kernels::gemm_tn(K, N, M, xi->data.data(), g, wi->ensure_grad().data());
      }
      if (has_bias && bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t j = 0; j < N; ++j) gb[j] += g[i * N + j];
      }
    });
  }
  return out;
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width, out_channels, ksize;
};

inline std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

// col[(c*k*k + ky*k + kx), (y*W + x)] for one image.
void im2col(const double* img, const ConvGeometry& g, PaddingMode padding, double* col) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.ksize);
  const std::ptrdiff_t pad = k / 2;
  const std::size_t hw = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = img + c * hw;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * g.ksize + ky) * g.ksize + kx) * hw;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          std::ptrdiff_t sy = y + ky - pad;
          const bool y_out = sy < 0 || sy >= H;
          if (padding == PaddingMode::replicate) sy = clamp_index(sy, H);
          for (std::ptrdiff_t x = 0; x < W; ++x) {
            std::ptrdiff_t sx = x + kx - pad;
            const bool x_out = sx < 0 || sx >= W;
            double v;
            if (padding == PaddingMode::replicate) {
              v = plane[sy * W + clamp_index(sx, W)];
            } else {
              v = (y_out || x_out) ? 0.0 : plane[sy * W + sx];
            }
            row[y * W + x] = v;
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeometry& g, PaddingMode padding, double* img_grad) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.ksize);
  const std::ptrdiff_t pad = k / 2;
  const std::size_t hw = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = img_grad + c * hw;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * g.ksize + ky) * g.ksize + kx) * hw;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          std::ptrdiff_t sy = y + ky - pad;
          const bool y_out = sy < 0 || sy >= H;
          if (padding == PaddingMode::replicate) sy = clamp_index(sy, H);
          for (std::ptrdiff_t x = 0; x < W; ++x) {
            std::ptrdiff_t sx = x + kx - pad;
            if (padding == PaddingMode::replicate) {
              plane[sy * W + clamp_index(sx, W)] += row[y * W + x];
            } else if (!y_out && sx >= 0 && sx < W) {
              plane[sy * W + sx] += row[y * W + x];
            }
          }
        }
      }
    }
  }
}

void depthwise_forward(const double* img, const double* w, const ConvGeometry& g,
                       PaddingMode padding, double* out) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.ksize);
  const std::ptrdiff_t pad = k / 2;
  const std::size_t hw = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = img + c * hw;
    const double* kern = w + c * g.ksize * g.ksize;
    double* o = out + c * hw;
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        double s = 0.0;
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
          std::ptrdiff_t sy = y + ky - pad;
          if (padding == PaddingMode::zero && (sy < 0 || sy >= H)) continue;
          sy = clamp_index(sy, H);
          for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
            std::ptrdiff_t sx = x + kx - pad;
            if (padding == PaddingMode::zero && (sx < 0 || sx >= W)) continue;
            sx = clamp_index(sx, W);
            s += kern[ky * k + kx] * plane[sy * W + sx];
          }
        }
        o[y * W + x] += s;
      }
    }
  }
}

void depthwise_backward(const double* img, const double* w, const double* gout,
                        const ConvGeometry& g, PaddingMode padding, double* gimg, double* gw) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.ksize);
  const std::ptrdiff_t pad = k / 2;
  const std::size_t hw = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = img + c * hw;
    const double* kern = w + c * g.ksize * g.ksize;
    const double* go = gout + c * hw;
    double* gi = gimg ? gimg + c * hw : nullptr;
    double* gk = gw ? gw + c * g.ksize * g.ksize : nullptr;
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        const double gv = go[y * W + x];
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
          std::ptrdiff_t sy = y + ky - pad;
          if (padding == PaddingMode::zero && (sy < 0 || sy >= H)) continue;
          sy = clamp_index(sy, H);
          for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
            std::ptrdiff_t sx = x + kx - pad;
            if (padding == PaddingMode::zero && (sx < 0 || sx >= W)) continue;
            sx = clamp_index(sx, W);
            if (gi) gi[sy * W + sx] += gv * kern[ky * k + kx];
            if (gk) gk[ky * k + kx] += gv * plane[sy * W + sx];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t groups, PaddingMode padding) {
  return conv2d(x, weight, Tensor::zeros({0}), groups, padding);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t groups,
              PaddingMode padding) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("conv2d: expected [B,C,H,W] or [C,H,W], got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 4;
  ConvGeometry g{};
  g.batch = batched ? x.dim(0) : 1;
  g.channels = x.dim(batched ? 1 : 0);
  g.height = x.dim(batched ? 2 : 1);
  g.width = x.dim(batched ? 3 : 2);
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) ||
      (weight.dim(2) != 1 && weight.dim(2) != 3)) {
    throw ShapeError("conv2d: weight must be [Cout, Cin/groups, k, k] with k in {1,3}, got " +
                     shape_str(weight.shape()));
  }
  g.ksize = weight.dim(2);
  g.out_channels = weight.dim(0);
  if (groups != 1 && groups != g.channels) {
    throw ShapeError("conv2d: groups must be 1 or the channel count (" +
                     std::to_string(g.channels) + "), got " + std::to_string(groups));
  }
  const bool depthwise = groups == g.channels && groups != 1;
  if (depthwise) {
    if (weight.dim(1) != 1 || g.out_channels != g.channels) {
      throw ShapeError("conv2d: depthwise weight must be [C,1,k,k], got " +
                       shape_str(weight.shape()));
    }
  } else if (weight.dim(1) != g.channels) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(g.channels));
  }
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match Cout");
  }

  const std::size_t hw = g.height * g.width;
  const std::size_t kk = g.ksize * g.ksize;
  Shape out_shape = batched ? Shape{g.batch, g.out_channels, g.height, g.width}
                            : Shape{g.out_channels, g.height, g.width};
  Tensor out = Tensor::zeros(out_shape);
  double* y = out.mutable_values().data();
  const double* xin = x.values().data();
  const double* w = weight.values().data();

  const bool record = autograd::needs_grad({&x, &weight, has_bias ? &bias : nullptr});
  // im2col buffers are kept for the backward pass of dense convolutions.
  auto cols = std::make_shared<std::vector<double>>();
  const bool use_col = !depthwise && g.ksize != 1;
  if (use_col) cols->resize(g.batch * g.channels * kk * hw);

  for (std::size_t b = 0; b < g.batch; ++b) {
    double* yb = y + b * g.out_channels * hw;
    const double* xb = xin + b * g.channels * hw;
    if (has_bias) {
      const double* bv = bias.values().data();
      for (std::size_t o = 0; o < g.out_channels; ++o) std::fill(yb + o * hw, yb + (o + 1) * hw, bv[o]);
    }
    if (depthwise) {
      depthwise_forward(xb, w, g, padding, yb);
    } else if (!use_col) {
      kernels::gemm_nn(g.out_channels, hw, g.channels, w, xb, yb);
    } else {
      double* col = cols->data() + b * g.channels * kk * hw;
      im2col(xb, g, padding, col);
      kernels::gemm_nn(g.out_channels, hw, g.channels * kk, w, col, yb);
    }
  }
  autograd::check_finite(out, "conv2d");

  if (record) {
    if (!use_col) cols.reset();
    autograd::attach(out, [g, depthwise, use_col, padding, has_bias, cols, xi = x.impl(),
                           wi = weight.impl(), bi = bias.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const std::size_t hw = g.height * g.width;
      const std::size_t kk = g.ksize * g.ksize;
      const std::size_t ckk = g.channels * kk;
      double* gx = xi->requires_grad ? xi->ensure_grad().data() : nullptr;
      double* gw = wi->requires_grad ? wi->ensure_grad().data() : nullptr;
      std::vector<double> dcol;
      if (use_col && gx) dcol.resize(ckk * hw);
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* go = oi->grad.data() + b * g.out_channels * hw;
        const double* xb = xi->data.data() + b * g.channels * hw;
        double* gxb = gx ? gx + b * g.channels * hw : nullptr;
        if (depthwise) {
          depthwise_backward(xb, wi->data.data(), go, g, padding, gxb, gw);
        } else if (!use_col) {
          if (gw) kernels::gemm_nt(g.out_channels, g.channels, hw, go, xb, gw);
          if (gxb) kernels::gemm_tn(g.channels, hw, g.out_channels, wi->data.data(), go, gxb);
        } else {
          const double* col = cols->data() + b * ckk * hw;
          if (gw) kernels::gemm_nt(g.out_channels, ckk, hw, go, col, gw);
          if (gxb) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            kernels::gemm_tn(ckk, hw, g.out_channels, wi->data.data(), go, dcol.data());
            col2im(dcol.data(), g, padding, gxb);
          }
        }
        if (has_bias && bi->requires_grad) {
          auto& gb = bi->ensure_grad();
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += go[o * hw + i];
            gb[o] += s;
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  const std::size_t C = x.shape().back();
  if (C == 0) throw ShapeError("layer_norm: channel dimension is empty");
  if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("layer_norm: gamma/beta must hold " + std::to_string(C) + " values");
  }
  const std::size_t rows = x.numel() / C;
  Tensor out = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  double* y = out.mutable_values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * C;
    double m = 0.0;
    for (std::size_t c = 0; c < C; ++c) m += xr[c];
    m /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - m) * (xr[c] - m);
    var /= static_cast<double>(C);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (xr[c] - m) * inv;
      (*xhat)[r * C + c] = h;
      y[r * C + c] = h * gv[c] + bv[c];
    }
  }
  autograd::check_finite(out, "layer_norm");

  if (autograd::needs_grad({&x, &gamma, &beta})) {
    autograd::attach(out, [C, rows, xhat, inv_std, xi = x.impl(), gi = gamma.impl(),
                           bi = beta.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      const auto& gam = gi->data;
      if (gi->requires_grad) {
        auto& gg = gi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < C; ++c) gg[c] += g[r * C + c] * (*xhat)[r * C + c];
      }
      if (bi->requires_grad) {
        auto& gb = bi->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < C; ++c) gb[c] += g[r * C + c];
      }
      if (xi->requires_grad) {
        auto& gx = xi->ensure_grad();
        const double invC = 1.0 / static_cast<double>(C);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            const double d = g[r * C + c] * gam[c];
            mean_d += d;
            mean_dh += d * (*xhat)[r * C + c];
          }
          mean_d *= invC;
          mean_dh *= invC;
          const double inv = (*inv_std)[r];
          for (std::size_t c = 0; c < C; ++c) {
            const double d = g[r * C + c] * gam[c];
            gx[r * C + c] += inv * (d - mean_d - (*xhat)[r * C + c] * mean_dh);
          }
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (autograd::needs_grad({&x})) {
    autograd::attach(out, [xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto& gx = xi->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t R = x.dim(0), C = x.dim(1);
  Tensor out = Tensor::zeros({C, R});
  const double* xv = x.values().data();
  double* y = out.mutable_values().data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) y[c * R + r] = xv[r * C + c];
  if (autograd::needs_grad({&x})) {
    autograd::attach(out, [R, C, xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[c * R + r];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  if (x.rank() < 1) throw ShapeError("gather_rows: input must have rank >= 1");
  const std::size_t L = x.dim(0);
  const std::size_t row = L == 0 ? 0 : x.numel() / L;
  Shape shape = x.shape();
  shape[0] = index.size();
  Tensor out = Tensor::zeros(shape);
  const double* xv = x.values().data();
  double* y = out.mutable_values().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= L) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range " +
                       std::to_string(L));
    }
    std::copy(xv + index[i] * row, xv + (index[i] + 1) * row, y + i * row);
  }
  if (autograd::needs_grad({&x})) {
    autograd::attach(out, [row, idx = std::vector<std::size_t>(index.begin(), index.end()),
                           xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      auto& gx = xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < row; ++j) gx[idx[i] * row + j] += g[i * row + j];
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  Shape shape = ref;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(ref));
      }
    }
    shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  std::vector<std::size_t> inner;  // elements per outer index, per part
  for (const Tensor& p : parts) inner.push_back(outer == 0 ? 0 : p.numel() / outer);
  std::size_t total_inner = 0;
  for (std::size_t n : inner) total_inner += n;

  Tensor out = Tensor::zeros(shape);
  double* y = out.mutable_values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * total_inner;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const double* src = parts[p].values().data() + o * inner[p];
      std::copy(src, src + inner[p], y + offset);
      offset += inner[p];
    }
  }
  std::vector<Tensor> vec(parts.begin(), parts.end());
  if (autograd::needs_grad(vec)) {
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    autograd::attach(out, [outer, inner, total_inner, impls, oi = out.impl()] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        std::size_t offset = o * total_inner;
        for (std::size_t p = 0; p < impls.size(); ++p) {
          if (impls[p]->requires_grad) {
            auto& gp = impls[p]->ensure_grad();
            for (std::size_t j = 0; j < inner[p]; ++j) gp[o * inner[p] + j] += g[offset + j];
          }
          offset += inner[p];
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (autograd::needs_grad({&x})) {
    autograd::attach(out, [xi = x.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const double g = oi->grad[0];
      for (double& v : xi->ensure_grad()) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace s3
