#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>

#include "pfnlab/core.hpp"
#include "pfnlab/rng.hpp"

using namespace pfnlab;

namespace {

// Reference SplitMix64 written out from the published constants.
std::uint64_t reference_mix(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

TEST_CASE("derive_seed golden values and determinism") {
  CHECK(derive_seed(0, 0) == 0xe220a8397b1dcdafull);
  CHECK(derive_seed(0, 0) == reference_mix(0));
  CHECK(derive_seed(42, 7) == 0xabffcacd95ffad57ull);
  CHECK(derive_seed(42, 7) == reference_mix(42ull ^ (7ull << 32)));
  CHECK(derive_seed(SeedSpec{42, 7}) == derive_seed(42, 7));
  CHECK(derive_seed(123456789, 99) == derive_seed(123456789, 99));
}

TEST_CASE("derive_seed separates neighbouring streams") {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t s = rng.next_u64();
    CHECK(derive_seed(s, 1) != derive_seed(s, 2));
  }
  std::set<std::uint64_t> seen;
  for (std::uint64_t k = 0; k < 5000; ++k) seen.insert(derive_seed(17, k));
  CHECK(seen.size() == 5000);
}

TEST_CASE("xoshiro stream is reproducible") {
  Rng a(99), b(99), c(100);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differs |= va != c.next_u64();
  }
  CHECK(differs);
  Rng s(SeedSpec{5, 6});
  Rng t(derive_seed(5, 6));
  CHECK(s.next_u64() == t.next_u64());
}

TEST_CASE("uniform draws stay in range") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double v = rng.uniform_positive();
    REQUIRE(v > 0.0);
    REQUIRE(v <= 1.0);
    const auto k = rng.uniform_int(3, 9);
    REQUIRE(k >= 3);
    REQUIRE(k <= 9);
  }
  CHECK(rng.uniform_int(7, 7) == 7);
}

TEST_CASE("uniform_int is unbiased on a small range") {
  Rng rng(8);
  std::array<int, 6> counts{};
  const int draws = 600000;
  for (int i = 0; i < draws; ++i) ++counts[rng.uniform_int(0, 5)];
  const double expected = draws / 6.0;
  const double sd = std::sqrt(draws * (1.0 / 6) * (5.0 / 6));
  for (int c : counts) CHECK(std::abs(c - expected) < 5 * sd);
}

TEST_CASE("standard normal moments over a million draws") {
  Rng rng(derive_seed(7, 0));
  const std::size_t total = 1000000;
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  while (count < total) {
    for (double v : sample_standard_normal_vector(rng, 5)) {
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sq / static_cast<double>(count) - mean * mean;
  CHECK(mean > -0.01);
  CHECK(mean < 0.01);
  CHECK(var > 0.99);
  CHECK(var < 1.01);
}

TEST_CASE("normal vectors are deterministic and use paired uniforms") {
  Rng a(3), b(3);
  CHECK(sample_standard_normal_vector(a, 7) == sample_standard_normal_vector(b, 7));

  // An odd dimension consumes the same uniforms as the next even one.
  Rng odd(11), even(11);
  const auto x = sample_standard_normal_vector(odd, 3);
  const auto y = sample_standard_normal_vector(even, 4);
  CHECK(x.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x[i] == y[i]);
  CHECK(odd.next_u64() == even.next_u64());

  // Box-Muller from two uniforms.
  Rng r(21), ref(21);
  const auto [z0, z1] = r.normal_pair();
  const double u1 = ref.uniform_positive(), u2 = ref.uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  CHECK(z0 == doctest::Approx(radius * std::cos(2.0 * M_PI * u2)).epsilon(1e-15));
  CHECK(z1 == doctest::Approx(radius * std::sin(2.0 * M_PI * u2)).epsilon(1e-15));
}

TEST_CASE("ClassDistribution validates its invariants") {
  CHECK_NOTHROW(ClassDistribution({0.25, 0.75}));
  CHECK_NOTHROW(ClassDistribution({1.0, 0.0}));
  CHECK_THROWS_AS(ClassDistribution({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution({NAN, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution({0.5, 0.5 + 1e-10}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution(std::vector<double>{}), std::invalid_argument);

  const auto u = ClassDistribution::uniform(4);
  for (double p : u.probs()) CHECK(p == 0.25);
  const auto b = ClassDistribution::binary(0.3);
  CHECK(b[0] == doctest::Approx(0.7));
  CHECK(b[1] == 0.3);
  CHECK_THROWS(ClassDistribution::binary(1.5));
  const auto n = ClassDistribution::normalized({1.0, 3.0});
  CHECK(n[1] == 0.75);
  CHECK_THROWS(ClassDistribution::normalized({0.0, 0.0}));
  CHECK_THROWS(ClassDistribution::normalized({-1.0, 2.0}));
}

TEST_CASE("Dataset enforces a common shape") {
  Dataset d(2, 2);
  CHECK(d.empty());
  d.push_back({1, {0.0, 1.0}});
  d.push_back({0, {2.0, -1.0}});
  CHECK(d.size() == 2);
  CHECK_THROWS_AS(d.push_back({2, {0.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(d.push_back({0, {0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(d.push_back({0, {0.0, INFINITY}}), std::invalid_argument);
  d.set_label(0, 0);
  CHECK(d[0].label == 0);
  CHECK_THROWS(d.set_label(0, 5));
  const std::vector<std::size_t> idx{1, 0};
  const Dataset s = d.subset(idx);
  CHECK(s[0].features == d[1].features);
  CHECK(s[1].features == d[0].features);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(50, 3,
                               [](std::size_t i) {
                                 if (i == 17) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  parallel_for(0, 2, [](std::size_t) { FAIL("called on empty range"); });
}

TEST_CASE("distance helpers") {
  const std::vector<double> a{0.0, 3.0}, b{4.0, 0.0};
  CHECK(squared_distance(a, b) == 25.0);
  CHECK(euclidean_norm(b) == 4.0);
}
