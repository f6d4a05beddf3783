#include "pfnlab/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pfnlab {

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) {
    word = splitmix64(s);
    s += 0x9E3779B97F4A7C15ULL;
  }
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = std::rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
  const std::uint64_t span = hi - lo;
  if (span == UINT64_MAX) return next_u64();
  const std::uint64_t range = span + 1;
  // 2^64 mod range; rejecting draws below it leaves a multiple of range.
  const std::uint64_t threshold = (0 - range) % range;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x < threshold);
  return lo + x % range;
}

std::pair<double, double> Rng::normal_pair() {
  const double u1 = uniform_positive();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

std::vector<double> sample_standard_normal_vector(Rng& rng, std::size_t d) {
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; i += 2) {
    const auto [a, b] = rng.normal_pair();
    out[i] = a;
    if (i + 1 < d) out[i + 1] = b;
  }
  return out;
}

}  // namespace pfnlab
