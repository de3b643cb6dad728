#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace splab {

/// Counter-based generator. Output i is the SplitMix64 finalizer applied to
/// seed + (i + 1) * 0x9E3779B97F4A7C15, so a stream is fully determined by
/// (seed, counter) and can be reproduced in any language with 64-bit
/// wrapping arithmetic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two outputs per call.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng derive(std::uint64_t stream) const;

  /// Fisher-Yates with `below`, portable across standard libraries.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace splab
