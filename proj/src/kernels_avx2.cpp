// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.
#include "hidfd/kernels.hpp"

#if defined(HIDFD_HAVE_AVX2)
#include <immintrin.h>

namespace hidfd::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(n, a[i * k + p], b + p * n, crow);
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_avx2(k, a + i * k, b + j * k);
  }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_avx2(n, arow[i], brow, c + i * n);
  }
}

constexpr KernelTable kAvx2{Isa::avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2,
                            gemm_tn_avx2};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace hidfd::kernels

#else

namespace hidfd::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace hidfd::kernels

#endif
