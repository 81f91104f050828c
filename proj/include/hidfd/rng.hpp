#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hidfd {

// Seeded stream with a platform-independent output sequence. The standard
// distributions are implementation-defined, so uniform and normal draws are
// derived directly from the mt19937_64 engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double normal();
  // Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Pure per-phase seed: a function of the master seed and the phase name only.
std::uint64_t derive_seed(std::uint64_t master, std::string_view phase);

}  // namespace hidfd
