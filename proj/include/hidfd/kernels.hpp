#pragma once

// Dense float64 inner-loop kernels.
//
// Every kernel has a scalar reference implementation. SIMD variants (AVX2+FMA
// on x86-64, NEON on aarch64) are compiled into separate translation units and
// selected once at runtime. Setting HIDFD_ISA=scalar in the environment, or
// calling select_isa(), forces a particular path.
//
// Matrix layout is row-major with explicit leading dimensions equal to the
// column count. All gemm variants accumulate into C (C += op(A) * op(B)).

#include <cstddef>
#include <string_view>
#include <vector>

namespace hidfd::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(std::size_t n, const double* x, const double* y);
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // C(m x n) += A(m x k) * B(k x n)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C(m x n) += A(m x k) * B(n x k)^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C(m x n) += A(k x m)^T * B(k x n); the k (batch) index is summed in order.
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

const KernelTable& scalar_table();
// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Variants that are both compiled in and supported by the running CPU.
std::vector<Isa> available_isas();

// The active table. First call resolves HIDFD_ISA or the best available ISA.
const KernelTable& active();

// Throws std::invalid_argument if the ISA is unavailable on this machine.
void select_isa(Isa isa);

}  // namespace hidfd::kernels
