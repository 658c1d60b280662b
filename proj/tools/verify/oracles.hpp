#pragma once

// Reference computations that share no numerical code with the library.

#include <cstddef>
#include <vector>

#include "s3mamba/image.hpp"

namespace s3::oracle {

struct Zoh {
  long double a_bar;
  long double b_bar;
};

/// exp of delta * [[a, b], [0, 0]] by scaling and squaring of a long Taylor
/// series in long double. The top row is (a_bar, b_bar).
Zoh zoh_matrix_exponential(double a, double b, double delta);

/// exp(a delta) by the same series and int_0^delta exp(a tau) d tau * b by
/// composite 10-point Gauss-Legendre quadrature.
Zoh zoh_quadrature(double a, double b, double delta, int panels = 16);

struct ScanProblem {
  std::size_t length = 0, d_inner = 0, n_state = 0;
  std::vector<double> x, delta;  // [L, Din]
  std::vector<double> B, C;      // [L, N]
  std::vector<double> A;         // [Din, N]
  std::vector<double> D;         // [Din]
};

/// y = K x + D x with the dense lower-triangular kernel
/// K[k][j] = sum_n C[k,n] (prod_{i=j+1..k} a_bar[i,n]) b_bar[j,n], using the
/// matrix-exponential oracle for every discretization.
std::vector<double> dense_scan(const ScanProblem& p);

/// Direct 2-D evaluation of Keys (a = -0.5) resampling: every output pixel
/// sums w(i) w(j) img(i, j) over all source pixels with replicate folding,
/// normalized by the 2-D weight sum.
Image direct_resample(const Image& img, std::size_t out_h, std::size_t out_w);

}  // namespace s3::oracle
