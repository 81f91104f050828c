#include "hidfd/kernels.hpp"

namespace hidfd::kernels {
namespace {

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot_scalar(k, a + i * k, b + j * k);
  }
}

void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

constexpr KernelTable kScalar{Isa::scalar, dot_scalar, axpy_scalar, gemm_nn_scalar,
                              gemm_nt_scalar, gemm_tn_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace hidfd::kernels
