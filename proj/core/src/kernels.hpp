#pragma once

// Dense row-major GEMM kernels. All variants accumulate into C and use a
// fixed loop order, so results are reproducible run to run.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace s3::kernels {

// Column tile width for the streaming kernels. Tiling does not change the
// per-element summation order.
inline constexpr std::size_t kColumnTile = 256;

namespace detail {

// C[:, j0:j1] += sum_k a(i, k) * B[k, j0:j1]; a(i, k) = A[i * sa_i + k * sa_k].
inline void stream_rows(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t sa_i,
                        std::size_t sa_k, const double* B, double* C, std::size_t j0, std::size_t j1) {
  std::size_t i = 0;
  for (; i + 4 <= M; i += 4) {
    double* c0 = C + (i + 0) * N;
    double* c1 = C + (i + 1) * N;
    double* c2 = C + (i + 2) * N;
    double* c3 = C + (i + 3) * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double a0 = A[(i + 0) * sa_i + k * sa_k];
      const double a1 = A[(i + 1) * sa_i + k * sa_k];
      const double a2 = A[(i + 2) * sa_i + k * sa_k];
      const double a3 = A[(i + 3) * sa_i + k * sa_k];
      const double* b = B + k * N;
      for (std::size_t j = j0; j < j1; ++j) {
        const double bj = b[j];
        c0[j] += a0 * bj;
        c1[j] += a1 * bj;
        c2[j] += a2 * bj;
        c3[j] += a3 * bj;
      }
    }
  }
  for (; i < M; ++i) {
    double* c = C + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = A[i * sa_i + k * sa_k];
      const double* b = B + k * N;
      for (std::size_t j = j0; j < j1; ++j) c[j] += a * b[j];
    }
  }
}

}  // namespace detail

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                    double* C) {
  for (std::size_t j0 = 0; j0 < N; j0 += kColumnTile) {
    detail::stream_rows(M, N, K, A, K, 1, B, C, j0, std::min(N, j0 + kColumnTile));
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                    double* C) {
  for (std::size_t j0 = 0; j0 < N; j0 += kColumnTile) {
    detail::stream_rows(M, N, K, A, 1, M, B, C, j0, std::min(N, j0 + kColumnTile));
  }
}

// C[M,N] += A[M,K] * B[N,K]^T. B is transposed once so the inner loop
// streams contiguous rows like gemm_nn.
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
                    double* C) {
  std::vector<double> bt(K * N);
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  gemm_nn(M, N, K, A, bt.data(), C);
}

}  // namespace s3::kernels
