#pragma once

#include <cstdint>
#include <vector>

namespace cubes {

// Deterministic RNG used everywhere randomness matters. The bounded/uniform
// helpers are hand-rolled so results do not depend on the standard library's
// distribution implementations.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed) : state(seed) {}

  // splitmix64 step
  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // unbiased integer in [0, n)
  uint64_t bounded(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // double in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }
};

// stream derivation so per-env / per-episode seeds never collide
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  Rng r(base ^ (0x6a09e667f3bcc909ull + stream * 0x9e3779b97f4a7c15ull));
  r.next_u64();
  return r.next_u64();
}

}  // namespace cubes
