#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace tabadv {

// Portable deterministic generator. The standard distributions are
// implementation-defined, so every draw is derived from raw engine bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled.
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a tag into a base seed (FNV-1a over the tag, then splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

/// 64-bit FNV-1a digest of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace tabadv
