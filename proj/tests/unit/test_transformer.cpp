#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "pfnlab/transformer.hpp"

using namespace pfnlab;

TEST_CASE("layer_norm of a constant vector is gamma_3 everywhere") {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(5, 2.7);
  const auto y = layer_norm(v, {1.7, 0.3, -0.4});
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(-0.4).epsilon(1e-15));
}

TEST_CASE("layer_norm of a zero-mean vector with gamma (1,1,0) is v / (|v| + 1)") {
  Eigen::VectorXd v(4);
  v << 1.0, -2.0, 3.0, -2.0;
  const auto y = layer_norm(v, {1.0, 1.0, 0.0});
  const Eigen::VectorXd expected = v / (v.norm() + 1.0);
  CHECK((y - expected).norm() < 1e-15);
}

TEST_CASE("layer_norm rejects gamma_2 = 0") {
  CHECK_THROWS_AS(layer_norm(Eigen::VectorXd::Ones(3), {1.0, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("layer_norm is Lipschitz with constant 4|g1|/|g2|") {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + rng.uniform_int(0, 6));
    Eigen::VectorXd a(d), b(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      a[i] = rng.uniform(-3, 3);
      b[i] = a[i] + rng.uniform(-0.5, 0.5) * (trial % 2 ? 1.0 : 1e-3);
    }
    const std::array<double, 3> g{rng.uniform(-2, 2), rng.uniform(0.01, 2), rng.uniform(-1, 1)};
    const double lhs = (layer_norm(a, g) - layer_norm(b, g)).norm();
    CHECK(lhs <= 4.0 * std::abs(g[0]) / g[1] * (a - b).norm() + 1e-9);
  }
}

TEST_CASE("transformer_forward on a single context example has unit attention") {
  Rng rng(3);
  const auto p = init_transformer(3, 2, 5, 2, rng);
  const auto data = testing::random_dataset(1, 3, rng);
  const auto out = transformer_forward(p, testing::random_point(3, rng), data);
  CHECK(out.trace.attention.rows() == 2);
  CHECK(out.trace.attention.cols() == 1);
  CHECK(out.trace.attention(0, 0) == 1.0);
  CHECK(out.trace.attention(1, 0) == 1.0);
}

TEST_CASE("readout zero gives the uniform distribution") {
  Rng rng(4);
  auto p = init_transformer(2, 2, 4, 3, rng);
  p.readout.setZero();
  const auto data = testing::random_dataset(7, 2, rng);
  const auto q = transformer_predict(p, testing::random_point(2, rng), data);
  CHECK(q[0] == 0.5);
  CHECK(q[1] == 0.5);
}

TEST_CASE("empty context raises EmptyContext") {
  Rng rng(5);
  const auto p = init_transformer(2, 2, 4, 1, rng);
  CHECK_THROWS_AS(transformer_forward(p, Features{0.0, 0.0}, Dataset(2, 2)), EmptyContext);
}

TEST_CASE("attention rows are probability vectors and outputs match the fast path") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_constrained_transformer(3, 2, 6, 3, {1.0, 0.5, 0.1}, 0.5, 1.0, rng);
    const auto data = testing::random_dataset(1 + rng.uniform_int(0, 40), 3, rng);
    const auto x = testing::random_point(3, rng);
    const auto out = transformer_forward(p, x, data);
    for (Eigen::Index h = 0; h < out.trace.attention.rows(); ++h) {
      CHECK(std::abs(out.trace.attention.row(h).sum() - 1.0) < 1e-12);
      CHECK(out.trace.attention.row(h).minCoeff() >= 0.0);
    }
    const auto fast = transformer_predict(p, x, data);
    CHECK(fast[1] == out.probs[1]);
  }
}

TEST_CASE("transformer output is invariant under permutation of the context") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = init_transformer(2, 2, 8, 2, rng);
    auto big = p;
    for (auto& m : big.query) m *= 30.0;
    for (auto& m : big.value) m *= 30.0;
    big.readout *= 30.0;
    const std::size_t n = 2 + rng.uniform_int(0, 30);
    const auto data = testing::random_dataset(n, 2, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    const auto shuffled = data.subset(perm);
    const auto x = testing::random_point(2, rng);
    for (const TransformerParams* params : {&p, static_cast<const TransformerParams*>(&big)}) {
      CHECK(std::abs(transformer_predict(*params, x, data)[1] -
                     transformer_predict(*params, x, shuffled)[1]) < 1e-9);
    }
  }
}

TEST_CASE("attention weights obey the e^8/n bound under the norm constraints") {
  Rng rng(8);
  for (std::size_t n : {4u, 64u, 256u}) {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t d = 1 + rng.uniform_int(0, 3);
      const auto p = random_constrained_transformer(d, 2, 4, 2, {1.0, 1.0, 0.0}, 0.1, 1.0, rng);
      const double r = 1.0 / std::sqrt(static_cast<double>(d));
      const auto data = testing::random_dataset(n, d, rng, r);
      const auto out = transformer_forward(p, testing::random_point(d, rng, r), data);
      CHECK(out.trace.attention.maxCoeff() <= std::exp(8.0) / static_cast<double>(n));
    }
  }
}

TEST_CASE("random_constrained_transformer hits the requested spectral norms") {
  Rng rng(9);
  const auto p = random_constrained_transformer(4, 2, 6, 3, {1.0, 1.0, 0.0}, 0.4, 0.9, rng);
  auto check = [](const Eigen::MatrixXd& m) {
    const double s = spectral_norm(m);
    CHECK(s >= 0.4 - 1e-12);
    CHECK(s <= 0.9 + 1e-12);
  };
  for (const auto& m : p.query) check(m);
  for (const auto& m : p.value) check(m);
  check(p.ff_in);
  check(p.ff_out);
  check(p.readout);
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(10);
  const auto p = init_transformer(3, 2, 5, 2, rng);
  const auto flat = flatten(p);
  CHECK(flat.size() == parameter_count(p));
  CHECK(flat.size() == 2 * 16 + 2 * 16 + 5 * 4 + 4 * 5 + 2 * 4 + 3);
  auto q = zero_transformer(3, 2, 5, 2);
  unflatten(flat, q);
  CHECK(flatten(q) == flat);
}

TEST_CASE("validate rejects bad shapes and non-finite values") {
  Rng rng(12);
  auto p = init_transformer(2, 2, 3, 1, rng);
  CHECK_NOTHROW(validate(p));
  auto bad = p;
  bad.ff_in.resize(2, 2);
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = p;
  bad.readout(0, 0) = std::nan("");
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = p;
  bad.gamma[1] = 0.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}
