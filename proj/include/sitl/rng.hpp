#pragma once

#include <cmath>
#include <cstdint>

namespace sitl {

/// SplitMix64 generator. Used everywhere randomness has to be reproducible
/// byte-for-byte across platforms and thread counts; std:: distributions are
/// not portable, so the scaling is done by hand here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Box-Muller; one value per call (the twin is discarded to keep the
  /// consumption pattern trivial to reason about).
  double normal(double mean = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586 * u2);
  }

  /// Deterministic child stream; independent of how much the parent has
  /// been consumed after the fork point.
  Rng fork(std::uint64_t index) const {
    Rng child(state_ ^ (0xD1B54A32D192ED03ull * (index + 1)));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
};

/// FNV-1a over an arbitrary byte range; used to derive per-item seeds from
/// value content rather than position.
inline std::uint64_t hash_bytes(const void* data, std::size_t len,
                                std::uint64_t seed = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace sitl
