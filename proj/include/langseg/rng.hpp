#pragma once

#include <cstdint>

namespace langseg {

// splitmix64 stream. Cheap, platform-independent, and every value is a pure
// function of the seed, so derived streams can be re-created from scratch at
// any point (checkpoint resume relies on this).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n), n > 0
  std::uint64_t next_below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

// Deterministic seed derivation for independent sub-streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  SplitMix64 rng(seed ^ (0x2545f4914f6cdd1dULL * (a + 1)) ^ (0x9e3779b97f4a7c15ULL * (b + 1)));
  return rng.next();
}

}  // namespace langseg
