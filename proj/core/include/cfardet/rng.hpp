#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cfardet {

// ============================================================================
// Counter-based splittable random streams.
//
// Monte Carlo work is keyed hierarchically: replicate j of point i under master
// seed s derives its stream from (s, i, j). Streams derived from distinct key
// paths are statistically independent, and extending a batch (more replicates,
// more points) never perturbs the draws of existing keys.
// ============================================================================

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer: a full-avalanche 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Hierarchical stream key. child(i) derives the key for sub-stream i.
struct RngKey {
  std::uint64_t v = 0;

  static constexpr RngKey from_seed(std::uint64_t seed) noexcept {
    return {mix64(seed + kGoldenGamma)};
  }
  constexpr RngKey child(std::uint64_t index) const noexcept {
    return {mix64(v ^ (kGoldenGamma * (index + 1)))};
  }
};

// splitmix64 sequence over a derived key. Deterministic and bit-portable:
// identical seeds give identical draws on every platform.
class RngStream {
 public:
  explicit constexpr RngStream(RngKey key) noexcept : state_(key.v) {}
  explicit constexpr RngStream(std::uint64_t seed) noexcept
      : state_(RngKey::from_seed(seed).v) {}

  std::uint64_t next_u64() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform01_pos() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform01();
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  // Index uniform on {0, ..., n-1} (n small; modulo bias is negligible for
  // the n used here but we reject to keep draws exact).
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t u = next_u64();
    while (u >= limit) u = next_u64();
    return u % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_pos();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cfardet
