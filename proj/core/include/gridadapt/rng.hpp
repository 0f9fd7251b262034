#pragma once

#include <cstdint>
#include <random>

namespace gridadapt {

// SplitMix64 finalizer; used to derive independent seed streams from one root.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Child seed for a named purpose stream (scenario batches, initialization, q0
// draws, ...). Documented derivation: splitmix64(root + stream + 1).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(root + stream + 1);
}

// Mersenne Twister (mt19937_64) with an explicit 53-bit uniform mapping.
// mt19937_64 output is fully specified by the standard and the mapping below
// avoids std::uniform_real_distribution, so seeded draws reproduce bit-exactly
// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double canonical() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gridadapt
