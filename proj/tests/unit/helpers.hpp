#pragma once

#include <cmath>
#include <vector>

#include "pfnlab/core.hpp"
#include "pfnlab/priors.hpp"
#include "pfnlab/rng.hpp"

namespace testing {

inline pfnlab::Dataset random_dataset(std::size_t n, std::size_t d, pfnlab::Rng& rng,
                                      double scale = 1.0) {
  pfnlab::Dataset data(d, 2);
  for (std::size_t i = 0; i < n; ++i) {
    pfnlab::Features x(d);
    for (double& v : x) v = rng.uniform(-scale, scale);
    data.push_back({rng.bernoulli(0.5) ? 1u : 0u, x});
  }
  return data;
}

inline pfnlab::Features random_point(std::size_t d, pfnlab::Rng& rng, double scale = 1.0) {
  pfnlab::Features x(d);
  for (double& v : x) v = rng.uniform(-scale, scale);
  return x;
}

inline pfnlab::Dataset make_1d(std::initializer_list<std::pair<std::size_t, double>> items) {
  pfnlab::Dataset data(1, 2);
  for (const auto& [y, x] : items) data.push_back({y, {x}});
  return data;
}

}  // namespace testing
