// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace softtpr {

/// Seeded random source with platform-independent draws.
///
/// The bit generator is std::mt19937_64, whose output sequence is fixed by the
/// standard. The conversions to uniform reals, bounded integers, and normals are
/// done here instead of through <random> distributions, whose algorithms are
/// implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller. Uses one pair per call; the sine branch is discarded.
  double normal();

  /// Derives an independent child seed (splitmix64 of the next draw).
  std::uint64_t fork_seed();

  /// Text serialization of the full engine state.
  std::string state() const;
  void restore(std::uint64_t seed, const std::string& state);

  friend bool operator==(const SeededRng& a, const SeededRng& b) {
    return a.seed_ == b.seed_ && a.engine_ == b.engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace softtpr
