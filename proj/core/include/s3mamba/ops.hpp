#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "s3mamba/tensor.hpp"

namespace s3 {

enum class UnaryOp { exp, log, neg, silu, sigmoid, softplus, tanh, abs };
enum class BinaryOp { add, sub, mul, div };

/// Pointwise ops. For binary ops the shapes must be equal, or the shape of
/// one operand must equal the trailing dimensions of the other (a rank-0 or
/// single-element operand broadcasts everywhere). The result takes the larger
/// shape; nothing is ever reshaped implicitly. abs uses subgradient 0 at 0.
Tensor elementwise(UnaryOp op, const Tensor& a);
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

Shape broadcast_shape(const Shape& a, const Shape& b);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor exp(const Tensor& a) { return elementwise(UnaryOp::exp, a); }
inline Tensor log(const Tensor& a) { return elementwise(UnaryOp::log, a); }
inline Tensor neg(const Tensor& a) { return elementwise(UnaryOp::neg, a); }
inline Tensor silu(const Tensor& a) { return elementwise(UnaryOp::silu, a); }
inline Tensor sigmoid(const Tensor& a) { return elementwise(UnaryOp::sigmoid, a); }
inline Tensor softplus(const Tensor& a) { return elementwise(UnaryOp::softplus, a); }
inline Tensor tanh(const Tensor& a) { return elementwise(UnaryOp::tanh, a); }
inline Tensor abs(const Tensor& a) { return elementwise(UnaryOp::abs, a); }

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// a[M,K] x b[K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[M,K] x weight[K,N] + bias[N]; pass an empty-shaped bias via linear(x, w).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& weight);

enum class PaddingMode { zero, replicate };

/// Stride-1 "same" convolution with 1x1 or 3x3 kernels.
/// x: [B,C,H,W] or [C,H,W]; weight: [Cout, C/groups, k, k]; bias: [Cout] or
/// an empty tensor (rank 0). groups must be 1 or C (depthwise, Cout == C).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t groups,
              PaddingMode padding);
Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t groups, PaddingMode padding);

/// Normalizes over the last dimension, then applies gamma/beta ([C] each).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // rank-2 only

// Row gather along axis 0: out[i, ...] = x[index[i], ...]. Gradients
// scatter-add back, so repeated indices are fine.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace s3
