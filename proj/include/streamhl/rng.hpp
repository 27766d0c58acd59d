#pragma once

// Deterministic splitmix64 generator. All randomness in the library flows
// through this so that datasets, training runs and augmentation draws are
// reproducible bit-for-bit from a seed, independent of the platform's
// <random> distributions.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace streamhl {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two raw draws per sample, no cached state.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be > 0");
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

  // Index sampled proportionally to nonnegative weights.
  std::size_t discrete(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0))
      throw std::invalid_argument("Rng::discrete: weights must sum > 0");
    double target = uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      cum += weights[i];
      if (target < cum) return i;
    }
    return weights.size() - 1;
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream from a base seed and a key, so parallel
// entities (streams, epochs, windows) get decorrelated generators.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  Rng r(seed ^ (key * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  return r.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k1,
                                 std::uint64_t k2) {
  return derive_seed(derive_seed(seed, k1), k2);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k1,
                                 std::uint64_t k2, std::uint64_t k3) {
  return derive_seed(derive_seed(seed, k1, k2), k3);
}

}  // namespace streamhl
