#pragma once
#include <cstdint>

namespace seqstn {

/// SplitMix64: the project-wide deterministic generator. 64-bit state, exact
/// across platforms, and cheap to fork into per-example child streams. All
/// uniform doubles come from the top 53 bits so the stream is identical on
/// every conforming IEEE-754 implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

  /// Uniform integer in [0, n). Modulo bias is < n/2^64, irrelevant at the
  /// canvas-coordinate magnitudes used here.
  int64_t next_below(uint64_t n) { return static_cast<int64_t>(next_u64() % n); }

  /// Child seed for stream `index` of a master seed. Output is independent of
  /// how many siblings exist, so example i is reproducible in isolation.
  static uint64_t derive(uint64_t master, uint64_t index) {
    uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

}  // namespace seqstn
