#pragma once

#include <cstdint>

namespace twrmcae {

/// Counter-based generator: output i of stream (seed, stream) is
/// splitmix64_mix(key + (i + 1) * 0x9E3779B97F4A7C15) with
/// key = splitmix64_mix(seed ^ splitmix64_mix(stream)). Any draw can be
/// reproduced from (seed, stream, counter) alone, so per-frame substreams
/// stay deterministic regardless of thread scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent generator for sub-task `index` (e.g. frame number).
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer uniform in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (one draw consumes two uniforms).
  double normal();

  static std::uint64_t mix(std::uint64_t z) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace twrmcae
