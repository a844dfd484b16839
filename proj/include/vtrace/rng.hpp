#pragma once

#include <cstdint>

#include "vtrace/vec3.hpp"

namespace vtrace {

// Counter-based deterministic RNG: every draw is a hash of (key, counter), so
// streams keyed by (seed, label) reproduce bit-for-bit regardless of platform
// or evaluation order. splitmix64 finalizer.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^ mix(stream * 0xD1342543DE82EF95ULL + 1))) {}

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Uniformly distributed direction on the unit sphere.
  Vec3 unit_vector() {
    const double z = 2.0 * next_double() - 1.0;
    const double phi = 2.0 * 3.14159265358979323846 * next_double();
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {z, s * std::sin(phi), s * std::cos(phi)};
  }

  // Standard normal via Box-Muller (consumes two draws).
  double gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace vtrace
