#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfnlab/core.hpp"
#include "pfnlab/priors.hpp"
#include "pfnlab/rng.hpp"

namespace pfnlab {

/// Every hypothesis with positive prior weight assigns probability zero to
/// some observation, so the posterior is undefined.
class DegeneratePosterior : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Posterior over the K hypotheses of a FinitePrior.
///
/// log_weights holds log prior + log-likelihood normalized by logsumexp, so
/// weights[k] == exp(log_weights[k]). Hypotheses ruled out by the data carry
/// log weight -inf and weight 0.
struct PosteriorWeights {
  std::vector<double> log_weights;
  std::vector<double> weights;
};

double log_sum_exp(std::span<const double> values);

/// Batch Bayes update. The shared feature marginal cancels and is never
/// evaluated, so only sum_i log p_k(Y_i | X_i) enters.
PosteriorWeights posterior_weights(const FinitePrior& prior, const Dataset& data);

/// One-observation update of an existing posterior; iterating it over a
/// dataset reproduces posterior_weights up to rounding.
PosteriorWeights update_posterior(const FinitePrior& prior, const PosteriorWeights& current,
                                  const Example& observation);

/// pi(. | x, D) = sum_k w_k(D) p_k(. | x).
ClassDistribution exact_ppd(const FinitePrior& prior, const Dataset& data,
                            std::span<const double> x);

/// exact_ppd bound to `prior` as a Predictor.
Predictor ppd_predictor(FinitePrior prior);

/// KL(p || q) in nats; +inf when q puts zero mass where p does not.
double kl_divergence(const ClassDistribution& p, const ClassDistribution& q);

/// Monte-Carlo estimates of E_X KL(p0(. | X) || p_k(. | X)) for every member
/// of a prior. best_index is the argmin, lowest index on ties; `tie` reports
/// whether another member matched the minimum exactly.
struct KlReference {
  std::size_t best_index = 0;
  std::vector<double> kl_values;
  std::vector<double> mc_error;
  bool tie = false;
};

KlReference kl_optimal_member(const FinitePrior& prior, const ConditionalModel& p0,
                              const FeatureLaw& feature_law, std::size_t mc_samples, Rng& rng);

struct NamedPredictor {
  std::string name;
  Predictor predict;
};

/// Mean log-likelihood of one predictor over the paired draws, and the mean
/// paired difference (exact PPD minus this predictor).
struct OptimalityEntry {
  std::string name;
  double mean_loglik = 0.0;
  double se_loglik = 0.0;
  double mean_gap = 0.0;
  double se_gap = 0.0;
};

struct OptimalityReport {
  std::size_t draws = 0;
  double ppd_mean_loglik = 0.0;
  double ppd_se_loglik = 0.0;
  std::vector<OptimalityEntry> challengers;
};

/// Estimates E_{Pi_N} E_Pi [log q(Y | X, D_N)] for the exact PPD and every
/// challenger on the same draws (task, N, D_N, query).
OptimalityReport ppd_optimality_check(const FinitePrior& prior, const SizePrior& size_prior,
                                      std::span<const NamedPredictor> challengers,
                                      std::size_t mc_draws, std::uint64_t seed);

}  // namespace pfnlab
