#include "pfnlab/ppd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pfnlab {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

PosteriorWeights normalize(std::vector<double> log_unnormalized) {
  const double lse = log_sum_exp(log_unnormalized);
  if (!std::isfinite(lse)) {
    throw DegeneratePosterior(
        "posterior_weights: every hypothesis has zero likelihood for the data");
  }
  PosteriorWeights out;
  out.weights.resize(log_unnormalized.size());
  for (std::size_t k = 0; k < log_unnormalized.size(); ++k) {
    log_unnormalized[k] -= lse;
    out.weights[k] = std::exp(log_unnormalized[k]);
  }
  out.log_weights = std::move(log_unnormalized);
  return out;
}

void check_dimension(const FinitePrior& prior, const Dataset& data) {
  if (data.dim() != prior.dim()) {
    std::ostringstream msg;
    msg << "dataset dimension " << data.dim() << " does not match prior dimension "
        << prior.dim();
    throw std::invalid_argument(msg.str());
  }
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments mean_and_se(std::span<const double> values) {
  Moments m;
  const auto n = static_cast<double>(values.size());
  for (double v : values) m.mean += v;
  m.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return m;
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : values) s += std::exp(v - hi);
  return hi + std::log(s);
}

PosteriorWeights posterior_weights(const FinitePrior& prior, const Dataset& data) {
  check_dimension(prior, data);
  const auto& models = prior.models();
  std::vector<double> log_w(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    double acc = std::log(prior.weights()[k]);
    for (const auto& e : data) {
      if (acc == kNegInf) break;
      acc += std::log(label_prob(models[k], e.label, e.features));
    }
    log_w[k] = acc;
  }
  return normalize(std::move(log_w));
}

PosteriorWeights update_posterior(const FinitePrior& prior, const PosteriorWeights& current,
                                  const Example& observation) {
  const auto& models = prior.models();
  std::vector<double> log_w = current.log_weights;
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (log_w[k] == kNegInf) continue;
    log_w[k] += std::log(label_prob(models[k], observation.label, observation.features));
  }
  return normalize(std::move(log_w));
}

ClassDistribution exact_ppd(const FinitePrior& prior, const Dataset& data,
                            std::span<const double> x) {
  const PosteriorWeights post = posterior_weights(prior, data);
  double p1 = 0.0;
  for (std::size_t k = 0; k < prior.size(); ++k) {
    if (post.weights[k] == 0.0) continue;
    p1 += post.weights[k] * prob_one(prior.models()[k], x);
  }
  return ClassDistribution::binary(std::clamp(p1, 0.0, 1.0));
}

Predictor ppd_predictor(FinitePrior prior) {
  return [prior = std::move(prior)](std::span<const double> x, const Dataset& data) {
    return exact_ppd(prior, data, x);
  };
}

double kl_divergence(const ClassDistribution& p, const ClassDistribution& q) {
  double kl = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] == 0.0) continue;
    if (q[y] == 0.0) return std::numeric_limits<double>::infinity();
    kl += p[y] * std::log(p[y] / q[y]);
  }
  return std::max(kl, 0.0);
}

KlReference kl_optimal_member(const FinitePrior& prior, const ConditionalModel& p0,
                              const FeatureLaw& feature_law, std::size_t mc_samples,
                              Rng& rng) {
  if (mc_samples < 1000) {
    throw std::invalid_argument("kl_optimal_member: need at least 1000 Monte-Carlo samples");
  }
  const std::size_t k_count = prior.size();
  std::vector<std::vector<double>> per_sample(k_count, std::vector<double>(mc_samples));
  for (std::size_t s = 0; s < mc_samples; ++s) {
    const Features x = sample_features(feature_law, rng);
    const ClassDistribution truth = class_probs(p0, x);
    for (std::size_t k = 0; k < k_count; ++k) {
      per_sample[k][s] = kl_divergence(truth, class_probs(prior.models()[k], x));
    }
  }
  KlReference ref;
  ref.kl_values.resize(k_count);
  ref.mc_error.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const Moments m = mean_and_se(per_sample[k]);
    ref.kl_values[k] = m.mean;
    ref.mc_error[k] = std::isfinite(m.mean) ? m.se : std::numeric_limits<double>::infinity();
  }
  for (std::size_t k = 1; k < k_count; ++k) {
    if (ref.kl_values[k] < ref.kl_values[ref.best_index]) ref.best_index = k;
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    if (k != ref.best_index && ref.kl_values[k] == ref.kl_values[ref.best_index]) {
      ref.tie = true;
    }
  }
  return ref;
}

OptimalityReport ppd_optimality_check(const FinitePrior& prior, const SizePrior& size_prior,
                                      std::span<const NamedPredictor> challengers,
                                      std::size_t mc_draws, std::uint64_t seed) {
  if (mc_draws < 100) {
    throw std::invalid_argument("ppd_optimality_check: need at least 100 draws");
  }
  // Probabilities of exactly zero are floored so a single impossible label
  // does not turn every mean into -inf.
  auto safe_log = [](double p) {
    return std::log(std::max(p, std::numeric_limits<double>::min()));
  };
  std::vector<double> ppd_ll(mc_draws);
  std::vector<std::vector<double>> challenger_ll(challengers.size(),
                                                 std::vector<double>(mc_draws));
  for (std::size_t j = 0; j < mc_draws; ++j) {
    Rng rng(derive_seed(seed, j));
    const auto& model = prior.models()[sample_task(prior, rng)];
    const std::size_t n = sample_size(size_prior, rng);
    const Dataset context = sample_dataset(model, prior.feature_law(), n, rng);
    const Example query = sample_example(model, prior.feature_law(), rng);
    ppd_ll[j] = safe_log(exact_ppd(prior, context, query.features)[query.label]);
    for (std::size_t c = 0; c < challengers.size(); ++c) {
      challenger_ll[c][j] =
          safe_log(challengers[c].predict(query.features, context)[query.label]);
    }
  }
  OptimalityReport report;
  report.draws = mc_draws;
  const Moments ppd = mean_and_se(ppd_ll);
  report.ppd_mean_loglik = ppd.mean;
  report.ppd_se_loglik = ppd.se;
  std::vector<double> gap(mc_draws);
  for (std::size_t c = 0; c < challengers.size(); ++c) {
    for (std::size_t j = 0; j < mc_draws; ++j) gap[j] = ppd_ll[j] - challenger_ll[c][j];
    const Moments own = mean_and_se(challenger_ll[c]);
    const Moments diff = mean_and_se(gap);
    report.challengers.push_back(
        {challengers[c].name, own.mean, own.se, diff.mean, diff.se});
  }
  return report;
}

}  // namespace pfnlab
