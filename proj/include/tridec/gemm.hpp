#pragma once

#include <cstddef>

#ifdef TRIDEC_USE_BLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace tridec::detail {

#ifdef TRIDEC_USE_BLAS
inline void blas_single_thread_init() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}

inline void blas_gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                      int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  blas_single_thread_init();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
              n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void blas_gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                      int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  blas_single_thread_init();
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
              n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
#endif

template <typename S>
void naive_gemm(bool ta, bool tb, int m, int n, int k, S alpha, const S* a, int lda, const S* b,
                int ldb, S beta, S* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == S(0)) {
      for (int j = 0; j < n; ++j) crow[j] = S(0);
    } else if (beta != S(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (!ta && !tb) {
    for (int i = 0; i < m; ++i) {
      S* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int p = 0; p < k; ++p) {
        const S av = alpha * a[static_cast<std::size_t>(i) * lda + p];
        const S* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int i = 0; i < m; ++i) {
      const S* arow = a + static_cast<std::size_t>(i) * lda;
      S* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        const S* brow = b + static_cast<std::size_t>(j) * ldb;
        S acc = S(0);
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += alpha * acc;
      }
    }
  } else if (ta && !tb) {
    for (int p = 0; p < k; ++p) {
      const S* arow = a + static_cast<std::size_t>(p) * lda;
      const S* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int i = 0; i < m; ++i) {
        const S av = alpha * arow[i];
        S* crow = c + static_cast<std::size_t>(i) * ldc;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      S* crow = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        S acc = S(0);
        for (int p = 0; p < k; ++p) {
          acc += a[static_cast<std::size_t>(p) * lda + i] * b[static_cast<std::size_t>(j) * ldb + p];
        }
        crow[j] += alpha * acc;
      }
    }
  }
}

/// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
/// Large products go through BLAS when built with TRIDEC_USE_BLAS; the size
/// threshold is fixed, so the dispatch is deterministic for a given build.
template <typename S>
inline void gemm(bool ta, bool tb, int m, int n, int k, S alpha, const S* a, int lda, const S* b,
                 int ldb, S beta, S* c, int ldc) {
#ifdef TRIDEC_USE_BLAS
  if (static_cast<long long>(m) * n * k >= 4096) {
    blas_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
#endif
  naive_gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace tridec::detail
