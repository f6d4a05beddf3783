#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pfnlab/core.hpp"

namespace pfnlab {

// xoshiro256** 1.0 (Blackman & Vigna). The 256-bit state is filled from four
// consecutive SplitMix64 outputs of the seed, as recommended by the authors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  explicit Rng(const SeedSpec& spec) : Rng(derive_seed(spec)) {}

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_positive() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [lo, hi], unbiased (rejection on the top range).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  bool bernoulli(double p) { return uniform() < p; }

  /// Box-Muller: consumes exactly two uniforms and returns two independent
  /// standard normals.
  std::pair<double, double> normal_pair();

  /// Fisher-Yates, using uniform_int so the permutation is reproducible.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, i - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> state_{};
};

/// d independent N(0, 1) draws. Pairs come from normal_pair(); for odd d the
/// second value of the last pair is discarded, so a draw always consumes
/// 2 * ceil(d / 2) uniforms.
std::vector<double> sample_standard_normal_vector(Rng& rng, std::size_t d);

}  // namespace pfnlab
