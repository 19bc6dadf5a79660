#pragma once

#include <cstddef>
#include <vector>

#include "ptgnn/common.hpp"

PTGNN_NAMESPACE_BEGIN
namespace kernels {

// Row-major GEMM variants, all accumulating into C (M x N).

// C += A * B,   A: M x K, B: K x N
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const real* A, const real* B,
                    real* C) {
  for (std::size_t i = 0; i < M; ++i) {
    real* c = C + i * N;
    const real* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const real av = a[k];
      if (av == real(0)) continue;
      const real* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C += A^T * B, A: K x M, B: K x N
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const real* A, const real* B,
                    real* C) {
  for (std::size_t k = 0; k < K; ++k) {
    const real* a = A + k * M;
    const real* b = B + k * N;
    for (std::size_t i = 0; i < M; ++i) {
      const real av = a[i];
      if (av == real(0)) continue;
      real* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C += A * B^T, A: M x K, B: N x K
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const real* A, const real* B,
                    real* C) {
  if (M < 4) {
    for (std::size_t i = 0; i < M; ++i) {
      const real* a = A + i * K;
      real* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) {
        const real* b = B + j * K;
        real acc = 0;
        for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
    return;
  }
  // transpose B once so the inner loop runs over contiguous columns
  thread_local std::vector<real> bt;
  bt.resize(N * K);
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  }
  gemm_nn(M, N, K, A, bt.data(), C);
}

}  // namespace kernels
PTGNN_NAMESPACE_END
