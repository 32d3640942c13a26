// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace nerfmark {

// All randomness in the project is derived from a single base seed through
// splitmix64 chains, keyed by (purpose, step, ray, ...). Per-ray streams make
// results independent of any parallel schedule, and per-step streams make a
// resumed run identical to an uninterrupted one.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream purposes. Keep stable: checkpointed runs depend on them.
enum class Stream : uint64_t {
  param_init = 1,
  base_rays = 2,
  ray_jitter = 3,
  importance = 4,
  shift = 5,
  patch = 6,
  message = 7,
  distortion = 8,
  eval = 9,
  attack = 10,
  scene = 11,
};

inline uint64_t derive_seed(uint64_t base, Stream purpose, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = splitmix64(base ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ static_cast<uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

inline std::mt19937_64 make_rng(uint64_t base, Stream purpose, uint64_t a = 0, uint64_t b = 0) {
  return std::mt19937_64(derive_seed(base, purpose, a, b));
}

}  // namespace nerfmark
