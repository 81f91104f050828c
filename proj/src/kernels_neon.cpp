#include "hidfd/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace hidfd::kernels {
namespace {

double dot_neon(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void gemm_nn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy_neon(n, a[i * k + p], b + p * n, c + i * n);
  }
}

void gemm_nt_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_neon(k, a + i * k, b + j * k);
  }
}

void gemm_tn_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) axpy_neon(n, a[p * m + i], b + p * n, c + i * n);
  }
}

constexpr KernelTable kNeon{Isa::neon, dot_neon, axpy_neon, gemm_nn_neon, gemm_nt_neon,
                            gemm_tn_neon};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

}  // namespace hidfd::kernels

#else

namespace hidfd::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace hidfd::kernels

#endif
