#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace flare {

// splitmix64, used to expand seeds into well-mixed streams.
inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// PCG32 core. Hand-rolled so that sequences are identical across platforms
// and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t s = seed;
    state_ = splitmix64(s);
    inc_ = (splitmix64(s) + 2 * stream) | 1ull;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18) ^ old) >> 27);
    uint32_t rot = static_cast<uint32_t>(old >> 59);
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // [0, 1)
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  float uniformf(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // [lo, hi) with rejection sampling so the distribution is exact.
  int randint(int lo, int hi) {
    uint32_t span = static_cast<uint32_t>(hi - lo);
    uint32_t limit = 0xffffffffu - 0xffffffffu % span;
    uint32_t r = next_u32();
    while (r >= limit) r = next_u32();
    return lo + static_cast<int>(r % span);
  }

  // Box-Muller; no cached spare so call order fully determines output.
  float normal() {
    double u1 = uniform();
    while (u1 <= 1e-12) u1 = uniform();
    double u2 = uniform();
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                              std::cos(6.283185307179586 * u2));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; i--) {
      size_t j = static_cast<size_t>(randint(0, static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent child seed.
  uint64_t split() { return next_u64(); }

 private:
  uint64_t state_;
  uint64_t inc_;
};

}  // namespace flare
