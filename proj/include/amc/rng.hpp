#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace amc {

// Mixes a 64-bit value (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Pseudo-random stream with a portable uniform double.
///
/// libstdc++ distributions are not guaranteed stable across standard
/// libraries, so bits are turned into doubles here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  /// Independent child stream keyed on the seed only, never on how far this
  /// stream has advanced: derive(epoch).derive(stream_id).
  Rng derive(std::uint64_t key) const { return Rng(mix64(seed_ ^ mix64(key + 0x51ED270B27A4A3ULL))); }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps it unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace amc
