#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace pheno {

// Counter-based pseudo-random stream (splitmix64). The state is a plain
// counter advanced by a fixed odd constant and hashed per draw, so a given
// (seed, draw index) pair always yields the same value and sub-streams can
// be forked cheaply.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n) {
    // Modulo bias is negligible for the n used here (n << 2^64).
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Standard normal via Box-Muller (cosine branch only; keeps the stream
  // consumption rate fixed at two draws per variate).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Derive an independent stream; used to give each (fold, repetition,
  // outcome) task its own deterministic seed.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(state_ ^ mix(stream + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t seed() const { return state_; }

  // Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Combine grid coordinates into one derived seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = Rng::mix(base ^ 0x9e3779b97f4a7c15ull);
  h = Rng::mix(h ^ (a + 0x165667b19e3779f9ull));
  h = Rng::mix(h ^ (b + 0x27d4eb2f165667c5ull));
  h = Rng::mix(h ^ (c + 0x85ebca77c2b2ae63ull));
  return h;
}

}  // namespace pheno
