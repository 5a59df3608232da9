#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace covct {

// SplitMix64 finalizer. Bit-identical on every platform, which is what the
// reproducibility contracts here need; the <random> distributions are
// implementation-defined and cannot give that.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent per-item stream: hash the (seed, index) pair so sibling
// streams do not correlate. Used for per-scan RNG in dataset generation.
inline uint64_t derive_stream(uint64_t seed, uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index ^ 0x6A09E667F3BCC909ULL));
}

// Counter-based SplitMix64 generator.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return mix64(state_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound) by rejection.
  uint64_t below(uint64_t bound) {
    const uint64_t limit = bound * (UINT64_MAX / bound);
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % bound;
  }

  // Box-Muller; always consumes exactly two draws per sample so call
  // sequences stay reproducible.
  double normal(double mean, double sigma) {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586477 * u2);
  }

  // Fisher-Yates, driven by below() so the permutation is portable.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace covct
