#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hidfd/kernels.hpp"

namespace hidfd::kernels {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
      return neon_table() != nullptr;
  }
  return false;
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
      return avx2_table();
    case Isa::neon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* resolve_default() {
  if (const char* env = std::getenv("HIDFD_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && cpu_supports(isa)) return table_for(isa);
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (cpu_supports(isa)) return table_for(isa);
  }
  return &scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = resolve_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument("kernel ISA not available: " + std::string(isa_name(isa)));
  }
  g_active.store(table_for(isa), std::memory_order_release);
}

}  // namespace hidfd::kernels
