// Copyright 2026 The aoidmpc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random number generation. xoshiro256++ with splitmix64
// seeding: a documented, platform-independent generator so that traces are
// bit-reproducible for a given (seed, scenario) pair on any machine.
//
// Sub-stream derivation: independent streams (one per link chain, etc.) are
// seeded with splitmix64(run_seed XOR stream_tag), keeping streams decoupled
// while still a pure function of the run seed.

#pragma once

#include <cstdint>

namespace aoidmpc {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  // Derives an independent stream from a run seed and a stream tag.
  static SeededRng derive(std::uint64_t run_seed, std::uint64_t stream_tag) {
    std::uint64_t mixer = run_seed ^ (stream_tag * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    return SeededRng(splitmix64(mixer));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Bernoulli draw: success (true) with probability q. Because uniform() is in
  // [0, 1), q = 1 always succeeds and q = 0 never does.
  bool bernoulli(double q) { return uniform() < q; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

}  // namespace aoidmpc
