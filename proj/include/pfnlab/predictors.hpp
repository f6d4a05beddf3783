#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pfnlab/core.hpp"

namespace pfnlab {

/// Probabilities entering any log-likelihood are clamped to
/// [kProbabilityClamp, 1 - kProbabilityClamp].
inline constexpr double kProbabilityClamp = 1e-6;
double clamp_probability(double p);

// ---------------------------------------------------------------------------
// Window smoother

enum class BandwidthScaling { Fixed, Scaled };

/// Bandwidth theta; in Scaled mode the effective radius is
/// n^(-1 / (4 + d)) * theta.
struct WindowSmootherParams {
  double bandwidth = 1.0;
  BandwidthScaling scaling = BandwidthScaling::Fixed;
};

double effective_bandwidth(const WindowSmootherParams& params, std::size_t n, std::size_t d);

/// Class frequencies among samples with ||X_i - x|| < b (strict). An empty
/// window yields the uniform distribution.
ClassDistribution window_predict(const WindowSmootherParams& params, std::span<const double> x,
                                 const Dataset& data);

// ---------------------------------------------------------------------------
// Classification trees on the real line

/// Sorted split locations theta_1 <= ... <= theta_S. Leaves are the
/// left-open, right-closed intervals (theta_j, theta_{j+1}] with
/// theta_0 = -inf and theta_{S+1} = +inf.
struct TreeParams {
  std::vector<double> splits;
};

void validate(const TreeParams& tree);
/// Index j of the leaf (theta_j, theta_{j+1}] containing x.
std::size_t leaf_index(const TreeParams& tree, double x);

/// Class frequencies in the leaf containing x; uniform for an empty leaf.
/// Requires a one-dimensional dataset.
ClassDistribution tree_predict(const TreeParams& tree, double x, const Dataset& data);

struct EnsembleParams {
  std::vector<TreeParams> members;
};

void validate(const EnsembleParams& ensemble);

/// Weights proportional to exp(-BIC_k) with
/// BIC_k = -2 loglik_k + num_splits * log n, normalized in log space.
std::vector<double> bic_weights_from_loglik(std::span<const double> loglik,
                                            std::size_t num_splits, std::size_t n);

/// In-sample log-likelihood sum_i log q_k(Y_i | X_i, D_n) of one tree, with
/// leaf probabilities clamped.
double tree_loglik(const TreeParams& tree, const Dataset& data);

/// BIC model-averaging weights of the ensemble members on `data` (n >= 1).
std::vector<double> bic_weights(const EnsembleParams& ensemble, const Dataset& data);

/// sum_k w_k tree_predict(member_k), renormalized.
ClassDistribution ensemble_predict(const EnsembleParams& ensemble, double x,
                                   const Dataset& data);

// ---------------------------------------------------------------------------
// Localization and baselines

/// k_n = min{cap, ceil(n^(4 / (d + 4)))}, clamped to [1, n].
struct LocalizerConfig {
  std::size_t cap = 500;
};

/// ceil(n^(4/(d+4))) computed exactly with integer arithmetic.
std::size_t localization_exponent_ceil(std::size_t n, std::size_t d);
std::size_t neighbor_count(const LocalizerConfig& config, std::size_t n, std::size_t d);

/// Indices of the k_n nearest examples to x (Euclidean, ties to the lower
/// index), in ascending index order.
std::vector<std::size_t> nearest_indices(const Dataset& data, std::span<const double> x,
                                         std::size_t k);

/// The k_n nearest neighbors of x, original relative order preserved.
Dataset localize(const Dataset& data, std::span<const double> x, const LocalizerConfig& config);

ClassDistribution constant_predict(const ClassDistribution& c, std::span<const double> x,
                                   const Dataset& data);

// Predictor adapters.
Predictor make_window_predictor(WindowSmootherParams params);
Predictor make_tree_predictor(TreeParams tree);
Predictor make_ensemble_predictor(EnsembleParams ensemble);
Predictor make_constant_predictor(ClassDistribution c);
/// Applies localize() before calling `base`.
Predictor make_localized(Predictor base, LocalizerConfig config);

}  // namespace pfnlab
