#pragma once

#include <cstddef>

namespace vti::detail {

// Shared matmul kernels (float for inference, double for gradient checks).
// Loop order is i-k-j, so each c[i][j] accumulates over k in ascending
// order and the j loop vectorizes on contiguous rows of b.

/// c[M,N] += a[M,K] * b[K,N]
template <class S>
inline void gemm_acc(const S* a, const S* b, S* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    const S* ai = a + i * K;
    S* ci = c + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const S av = ai[k];
      const S* bk = b + k * N;
      for (std::size_t j = 0; j < N; ++j) ci[j] += av * bk[j];
    }
  }
}

/// c[M,N] = a[M,K] * b[K,N]
template <class S>
inline void gemm(const S* a, const S* b, S* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M * N; ++i) c[i] = S(0);
  gemm_acc(a, b, c, M, K, N);
}

/// c[M,N] += a[M,K] * b[N,K]^T  (b given row-major as [N,K])
template <class S>
inline void gemm_acc_bt(const S* a, const S* b, S* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    const S* ai = a + i * K;
    S* ci = c + i * N;
    for (std::size_t j = 0; j < N; ++j) {
      const S* bj = b + j * K;
      S acc = S(0);
      for (std::size_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
      ci[j] += acc;
    }
  }
}

/// c[K,N] += a[M,K]^T * b[M,N]  (a given row-major as [M,K])
template <class S>
inline void gemm_acc_at(const S* a, const S* b, S* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t m = 0; m < M; ++m) {
    const S* am = a + m * K;
    const S* bm = b + m * N;
    for (std::size_t k = 0; k < K; ++k) {
      const S av = am[k];
      S* ck = c + k * N;
      for (std::size_t j = 0; j < N; ++j) ck[j] += av * bm[j];
    }
  }
}

}  // namespace vti::detail
