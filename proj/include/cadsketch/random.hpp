#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace cadsketch {

/// Seeded, platform-stable random source.
///
/// The engine is std::mt19937_64 seeded through one SplitMix64 round of the
/// user seed. The standard distributions are implementation-defined, so every
/// derived draw (uniform, integer, normal) is computed here from raw 64-bit
/// engine output; identical seeds yield identical sequences everywhere.
/// split(k) derives an independent stream keyed by k without consuming state.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  RandomSource split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in the closed range [lo, hi]; unbiased.
  int uniform_int(int lo, int hi);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn proportionally to the (non-negative) weights.
  int categorical(std::span<const double> weights);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cadsketch
