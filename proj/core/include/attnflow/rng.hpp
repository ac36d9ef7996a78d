#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace attnflow {

// Portable deterministic RNG. std::mt19937_64's output sequence is fixed by
// the standard; the distribution helpers below are implemented here because
// the <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n > 0. Unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stateless seed derivation (SplitMix64 finaliser) for per-item streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace attnflow
