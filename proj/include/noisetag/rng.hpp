// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "noisetag/error.hpp"

namespace noisetag {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic, platform-independent PRNG (xoshiro256** seeded through
/// splitmix64). All randomness in the project flows through this class so
/// that results are reproducible bit-for-bit from a seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64_next(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t uniform_int(std::uint64_t bound) {
    if (bound == 0) throw InvalidInputError("uniform_int: bound must be >= 1");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via Box-Muller. Draws two uniforms per call.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Named sub-streams of a base seed. Every consumer of randomness derives its
// own stream through derive_seed(base, stream, ...) so that streams stay
// independent of each other and of draw order. In particular the snippet
// stream is keyed by (clip index, epoch), which makes the snippet drawn for a
// clip independent of batch size and batch order.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEpochShuffle = 2,
  kSnippet = 3,
  kDropout = 4,
  kCorpus = 5,
  kLabelShuffle = 6,
  kCorrupt = 7,
  kSubsample = 8,
  kHoldout = 9,
};

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = base;
  std::uint64_t out = splitmix64_next(state);
  for (std::uint64_t p : path) {
    state = out ^ (p + 0x9e3779b97f4a7c15ull);
    out = splitmix64_next(state);
  }
  return out;
}

inline std::uint64_t derive_seed(std::uint64_t base, Stream s) {
  return derive_seed(base, {static_cast<std::uint64_t>(s)});
}

inline std::uint64_t derive_seed(std::uint64_t base, Stream s,
                                 std::uint64_t a) {
  return derive_seed(base, {static_cast<std::uint64_t>(s), a});
}

inline std::uint64_t derive_seed(std::uint64_t base, Stream s, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(base, {static_cast<std::uint64_t>(s), a, b});
}

}  // namespace noisetag
