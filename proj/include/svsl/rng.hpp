#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace svsl {

// Deterministic random source: xoshiro256++ seeded through splitmix64.
// Both algorithms are fully specified by their reference implementations,
// so a seed reproduces the same draw sequence on every platform. That is
// what lets multi-seed experiment results be compared across machines.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }

  // xoshiro256++ core step.
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in (0, 1]; the open lower end keeps log() calls safe.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. No spare is cached: one draw consumes
  // two uniforms, which keeps the draw sequence a pure function of call
  // order.
  double next_gaussian() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % bound;
    }
  }

  // splitmix64 step; also used standalone for sub-seed derivation.
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t seed_ = 0;
  std::uint64_t state_[4] = {};
};

// Independent sub-seed for a named stream (init, shuffle, train/test splits).
// stream 0, 1, 2, ... walk the splitmix64 sequence rooted at the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master;
  std::uint64_t out = RngState::splitmix64(x);
  for (std::uint64_t i = 0; i < stream; ++i) out = RngState::splitmix64(x);
  return out;
}

// Fisher-Yates shuffle driven by the generator above.
template <typename T>
void shuffle(std::vector<T>& items, RngState& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace svsl
