#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace vti {

// Deterministic splitmix64 stream. The standard <random> engines are
// portable but the distributions are not, so all sampling transforms are
// spelled out here. Every seeded artifact (masks, noise, scenes, init)
// goes through this class.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (one fresh pair per call).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    // Guard the log against u1 == 0.
    u1 = u1 <= 0.0 ? 0x1.0p-53 : u1;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t bounded(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// k distinct values from [0, n), partial Fisher-Yates, order as drawn.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k) {
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::uint32_t> out;
    out.reserve(k);
    for (std::uint32_t i = 0; i < k && i < n; ++i) {
      const std::uint64_t j = i + bounded(n - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::uint64_t state_;
};

/// Stable seed derivation for per-example / per-copy streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  Rng r(seed ^ (salt + 1) * 0x9E3779B97F4A7C15ull);
  return r.next_u64();
}

}  // namespace vti
