#include "pfnlab/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pfnlab {

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

double effective_bandwidth(const WindowSmootherParams& params, std::size_t n, std::size_t d) {
  if (params.scaling == BandwidthScaling::Fixed) return params.bandwidth;
  const double a_n = std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(d)));
  return a_n * params.bandwidth;
}

ClassDistribution window_predict(const WindowSmootherParams& params, std::span<const double> x,
                                 const Dataset& data) {
  if (!(params.bandwidth > 0.0)) throw std::invalid_argument("window: bandwidth must be > 0");
  if (data.empty()) throw std::invalid_argument("window: empty dataset");
  const double b = effective_bandwidth(params, data.size(), data.dim());
  const double b2 = b * b;
  std::vector<double> counts(data.num_classes(), 0.0);
  double total = 0.0;
  for (const auto& e : data) {
    if (squared_distance(e.features, x) < b2) {
      counts[e.label] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) return ClassDistribution::uniform(data.num_classes());
  for (double& c : counts) c /= total;
  return ClassDistribution(std::move(counts));
}

void validate(const TreeParams& tree) {
  for (double s : tree.splits) {
    if (!std::isfinite(s)) throw std::invalid_argument("TreeParams: non-finite split");
  }
  if (!std::is_sorted(tree.splits.begin(), tree.splits.end())) {
    throw std::invalid_argument("TreeParams: splits must be sorted");
  }
}

std::size_t leaf_index(const TreeParams& tree, double x) {
  // Number of splits strictly below x; x == theta_j falls in the leaf to its left.
  return static_cast<std::size_t>(
      std::lower_bound(tree.splits.begin(), tree.splits.end(), x) - tree.splits.begin());
}

namespace {

void require_1d(const Dataset& data) {
  if (data.dim() != 1) throw std::invalid_argument("trees require one-dimensional features");
}

// Per-leaf class counts for one tree over a dataset.
std::vector<std::vector<double>> leaf_counts(const TreeParams& tree, const Dataset& data) {
  std::vector<std::vector<double>> counts(tree.splits.size() + 1,
                                          std::vector<double>(data.num_classes(), 0.0));
  for (const auto& e : data) counts[leaf_index(tree, e.features[0])][e.label] += 1.0;
  return counts;
}

}  // namespace

ClassDistribution tree_predict(const TreeParams& tree, double x, const Dataset& data) {
  require_1d(data);
  const std::size_t leaf = leaf_index(tree, x);
  std::vector<double> counts(data.num_classes(), 0.0);
  double total = 0.0;
  for (const auto& e : data) {
    if (leaf_index(tree, e.features[0]) == leaf) {
      counts[e.label] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) return ClassDistribution::uniform(data.num_classes());
  for (double& c : counts) c /= total;
  return ClassDistribution(std::move(counts));
}

void validate(const EnsembleParams& ensemble) {
  if (ensemble.members.empty()) throw std::invalid_argument("EnsembleParams: K must be >= 1");
  const std::size_t s = ensemble.members.front().splits.size();
  for (const auto& m : ensemble.members) {
    validate(m);
    if (m.splits.size() != s) {
      throw std::invalid_argument("EnsembleParams: members must share the split count");
    }
  }
}

std::vector<double> bic_weights_from_loglik(std::span<const double> loglik,
                                            std::size_t num_splits, std::size_t n) {
  if (n == 0) throw std::invalid_argument("bic_weights: n must be >= 1");
  const double penalty = static_cast<double>(num_splits) * std::log(static_cast<double>(n));
  std::vector<double> neg_bic(loglik.size());
  for (std::size_t k = 0; k < loglik.size(); ++k) neg_bic[k] = 2.0 * loglik[k] - penalty;
  const double hi = *std::max_element(neg_bic.begin(), neg_bic.end());
  double sum = 0.0;
  for (double& v : neg_bic) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (double& v : neg_bic) v /= sum;
  return neg_bic;
}

double tree_loglik(const TreeParams& tree, const Dataset& data) {
  require_1d(data);
  const auto counts = leaf_counts(tree, data);
  std::vector<double> totals(counts.size(), 0.0);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    for (double c : counts[j]) totals[j] += c;
  }
  double ll = 0.0;
  for (const auto& e : data) {
    const std::size_t leaf = leaf_index(tree, e.features[0]);
    ll += std::log(clamp_probability(counts[leaf][e.label] / totals[leaf]));
  }
  return ll;
}

std::vector<double> bic_weights(const EnsembleParams& ensemble, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("bic_weights: n must be >= 1");
  std::vector<double> ll(ensemble.members.size());
  for (std::size_t k = 0; k < ll.size(); ++k) ll[k] = tree_loglik(ensemble.members[k], data);
  return bic_weights_from_loglik(ll, ensemble.members.front().splits.size(), data.size());
}

ClassDistribution ensemble_predict(const EnsembleParams& ensemble, double x,
                                   const Dataset& data) {
  require_1d(data);
  if (data.empty()) return ClassDistribution::uniform(data.num_classes());
  const std::vector<double> w = bic_weights(ensemble, data);
  std::vector<double> mix(data.num_classes(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    const ClassDistribution q = tree_predict(ensemble.members[k], x, data);
    for (std::size_t y = 0; y < mix.size(); ++y) mix[y] += w[k] * q[y];
  }
  return ClassDistribution::normalized(std::move(mix));
}

namespace {

// Saturating base^exp in 128 bits.
unsigned __int128 saturating_pow(std::size_t base, std::size_t exp, unsigned __int128 cap) {
  unsigned __int128 r = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    r *= base;
    if (r > cap) return cap + 1;
  }
  return r;
}

}  // namespace

std::size_t localization_exponent_ceil(std::size_t n, std::size_t d) {
  if (n == 0) return 0;
  if (n >= (std::size_t{1} << 31)) throw std::invalid_argument("localization: n too large");
  const unsigned __int128 n4 = static_cast<unsigned __int128>(n) * n * n * n;
  const std::size_t e = d + 4;
  auto k = static_cast<std::size_t>(
      std::ceil(std::pow(static_cast<double>(n), 4.0 / static_cast<double>(e))));
  k = std::max<std::size_t>(k, 1);
  // Smallest k with k^(d+4) >= n^4.
  while (k > 1 && saturating_pow(k - 1, e, n4) >= n4) --k;
  while (saturating_pow(k, e, n4) < n4) ++k;
  return k;
}

std::size_t neighbor_count(const LocalizerConfig& config, std::size_t n, std::size_t d) {
  if (n == 0) return 0;
  const std::size_t k = std::min(config.cap, localization_exponent_ceil(n, d));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<std::size_t> nearest_indices(const Dataset& data, std::span<const double> x,
                                         std::size_t k) {
  const std::size_t n = data.size();
  k = std::min(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (k == n) return order;
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(data[i].features, x);
  auto closer = [&](std::size_t a, std::size_t b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                   closer);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Dataset localize(const Dataset& data, std::span<const double> x, const LocalizerConfig& config) {
  if (data.empty()) throw std::invalid_argument("localize: empty dataset");
  const std::size_t k = neighbor_count(config, data.size(), data.dim());
  if (k >= data.size()) return data;
  return data.subset(nearest_indices(data, x, k));
}

ClassDistribution constant_predict(const ClassDistribution& c, std::span<const double>,
                                   const Dataset&) {
  return c;
}

Predictor make_window_predictor(WindowSmootherParams params) {
  return [params](std::span<const double> x, const Dataset& data) {
    return window_predict(params, x, data);
  };
}

Predictor make_tree_predictor(TreeParams tree) {
  validate(tree);
  return [tree = std::move(tree)](std::span<const double> x, const Dataset& data) {
    return tree_predict(tree, x[0], data);
  };
}

Predictor make_ensemble_predictor(EnsembleParams ensemble) {
  validate(ensemble);
  return [ensemble = std::move(ensemble)](std::span<const double> x, const Dataset& data) {
    return ensemble_predict(ensemble, x[0], data);
  };
}

Predictor make_constant_predictor(ClassDistribution c) {
  return [c = std::move(c)](std::span<const double> x, const Dataset& data) {
    return constant_predict(c, x, data);
  };
}

Predictor make_localized(Predictor base, LocalizerConfig config) {
  return [base = std::move(base), config](std::span<const double> x, const Dataset& data) {
    return base(x, localize(data, x, config));
  };
}

}  // namespace pfnlab
