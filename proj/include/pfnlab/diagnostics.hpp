#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pfnlab/core.hpp"
#include "pfnlab/predictors.hpp"
#include "pfnlab/priors.hpp"
#include "pfnlab/transformer.hpp"

namespace pfnlab {

// Rate fitting ------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of log(value) on log(n). Needs >= 3 pairs and
/// positive values; r^2 is 1 when the values are all equal.
RateFit fit_rate(std::span<const std::pair<double, double>> pairs);

// Bias / variance -----------------------------------------------------------------

struct BiasVarianceSettings {
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 500;   // M
  std::size_t test_points = 100;  // T
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Class whose probability is decomposed.
  std::size_t label = 1;
};

struct BiasVarianceRow {
  std::size_t n = 0;
  double mean_sq_bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  std::size_t replicates = 0;
  std::size_t test_points = 0;
  std::uint64_t seed = 0;
  /// avg_t avg_r (q_rt - p_t)^2 computed directly from the replicate outputs.
  double direct_mse = 0.0;
  /// direct_mse - (mean_sq_bias + variance).
  double cross_term = 0.0;
  /// Standard error of direct_mse across replicates.
  double direct_mse_se = 0.0;
  /// Standard errors of mean_sq_bias and variance across test points.
  double bias_se = 0.0;
  double variance_se = 0.0;
};

struct BiasVarianceReport {
  std::vector<BiasVarianceRow> rows;
};

/// For each n: M replicate datasets from p0, predictions at T test features.
/// The test features are drawn once (stream 0 of the seed) and shared by every
/// n; replicate r at size n uses derive_seed(derive_seed(seed, n), r).
BiasVarianceReport bias_variance(const Predictor& predictor, const ConditionalModel& p0,
                                 const FeatureLaw& law, const BiasVarianceSettings& settings);

// Sensitivity -------------------------------------------------------------------

struct SensitivitySettings {
  std::vector<std::size_t> n_grid;
  std::size_t trials = 50;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Fixed test point; drawn from the feature law when absent.
  std::optional<Features> test_point;
};

struct SensitivityRow {
  std::size_t n = 0;
  double max_change = 0.0;
  double mean_change = 0.0;
  std::size_t trials = 0;
};

struct SensitivityEstimate {
  std::vector<SensitivityRow> rows;
  Features test_point;
  /// False when fewer than four n values were probed or a max change is zero.
  bool fit_defined = false;
  double alpha = 0.0;
  double lipschitz = 0.0;
  double r_squared = 0.0;
};

/// Replace one uniformly chosen sample by a fresh draw and record the largest
/// per-class change of the output at the test point.
SensitivityEstimate sensitivity_probe(const Predictor& predictor, const ConditionalModel& p0,
                                      const FeatureLaw& law, const SensitivitySettings& settings);

// Locality ----------------------------------------------------------------------

enum class EpsilonRule {
  /// Distance from x to its k_n-th nearest context feature (localizer rule).
  KnnRadius,
  Fixed,
};

struct LocalitySettings {
  std::vector<std::size_t> n_grid;
  std::size_t replicates = 50;
  EpsilonRule rule = EpsilonRule::KnnRadius;
  double epsilon = 1.0;
  LocalizerConfig localizer{};
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::optional<Features> test_point;
};

struct LocalityRow {
  std::size_t n = 0;
  double epsilon = 0.0;  // mean over replicates
  double mean_change = 0.0;
  double max_change = 0.0;
  std::size_t replicates = 0;
};

struct LocalityProbeReport {
  std::vector<LocalityRow> rows;
};

/// Labels of samples with ||X_i - x|| > eps_n are resampled from p_tilde;
/// the remaining samples are kept. Reports the class-wise max |q - q~|.
LocalityProbeReport locality_probe(const Predictor& predictor, const ConditionalModel& p0,
                                   const ConditionalModel& p_tilde, const FeatureLaw& law,
                                   const LocalitySettings& settings);

// Symmetrization ----------------------------------------------------------------

struct SymmetrizeSettings {
  std::size_t n = 6;
  std::size_t replicates = 2000;
  /// Random permutations per replicate when n > 8.
  std::size_t permutation_samples = 1000;
  std::uint64_t seed = 0;
  std::size_t label = 1;
};

struct SymmetrizeReport {
  double mean_f = 0.0;
  double variance_f = 0.0;
  double mean_symmetrized = 0.0;
  double variance_symmetrized = 0.0;
  /// Standard error of variance_f - variance_symmetrized (paired).
  double variance_gap_se = 0.0;
  bool exact = false;
  std::size_t replicates = 0;
};

/// f(D) = 1{Y_1 = 1}: depends on the order of the context. Uniform on an
/// empty context.
Predictor make_first_label_predictor();

/// Average of f over orderings of the context. Exact enumeration for n <= 8.
double symmetrized_output(const Predictor& f, std::span<const double> x, const Dataset& data,
                          std::size_t label, std::size_t permutation_samples, Rng& rng);

SymmetrizeReport symmetrize_check(const Predictor& f, const ConditionalModel& p0,
                                  const FeatureLaw& law, const SymmetrizeSettings& settings);

// Tilted limit of attention -------------------------------------------------------

struct TiltSettings {
  std::vector<std::size_t> n_grid;
  std::size_t mc_samples = 100000;
  std::size_t replicates = 20;
  std::uint64_t seed = 0;
};

struct TiltRow {
  std::size_t n = 0;
  double median_discrepancy = 0.0;
  double mean_discrepancy = 0.0;
  std::size_t replicates = 0;
};

struct TiltReport {
  /// W_v^(h) E_{V ~ g_h}[V] per head, and their sum.
  std::vector<Eigen::VectorXd> head_limits;
  Eigen::VectorXd limit;
  std::vector<TiltRow> rows;
};

/// E_{V ~ g}[V] for g proportional to exp(w . V) p0(V), V = (Y, X). The label
/// is summed out exactly; X is sampled, so the estimate is self-normalized
/// importance sampling over mc_samples feature draws.
Eigen::VectorXd tilted_mean(const Eigen::VectorXd& w, const ConditionalModel& p0,
                            const FeatureLaw& law, std::size_t mc_samples, Rng& rng);

TiltReport tilt_limit(const TransformerParams& params, std::span<const double> x,
                      const ConditionalModel& p0, const FeatureLaw& law,
                      const TiltSettings& settings);

}  // namespace pfnlab
