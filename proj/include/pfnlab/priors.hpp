#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "pfnlab/core.hpp"
#include "pfnlab/rng.hpp"

namespace pfnlab {

// Conditional models p(y | x) for binary labels. Each variant defines p(1 | x);
// p(0 | x) is its complement.

struct ConstantBernoulli {
  double p1 = 0.5;
};

/// p(1 | x) = 1 / (1 + exp(-(w'x + b))).
struct Logistic {
  std::vector<double> weights;
  double offset = 0.0;
};

/// p(1 | x) = 1/2 + a sin(w'x + phi) / 2 with amplitude a in [0, 1].
struct SineTask {
  double amplitude = 1.0;
  std::vector<double> frequency;
  double phase = 0.0;
};

using ConditionalModel = std::variant<ConstantBernoulli, Logistic, SineTask>;

/// Throws std::invalid_argument on out-of-range parameters.
void validate(const ConditionalModel& model);
/// Feature dimension a model requires, or nullopt for feature-free models.
std::optional<std::size_t> model_dim(const ConditionalModel& model);
double prob_one(const ConditionalModel& model, std::span<const double> x);
ClassDistribution class_probs(const ConditionalModel& model, std::span<const double> x);
/// p(y | x) for y in {0, 1}.
double label_prob(const ConditionalModel& model, std::size_t label, std::span<const double> x);

// Feature laws p(x), shared by every hypothesis in a prior.

struct StandardNormal {
  std::size_t dim = 1;
};

/// Independent uniform coordinates on [lo, hi]^dim.
struct UniformBox {
  std::size_t dim = 1;
  double lo = -1.0;
  double hi = 1.0;
};

/// Finitely many atoms with probabilities; used where closed-form
/// expectations over the feature law are needed.
struct DiscreteAtoms {
  std::vector<Features> atoms;
  std::vector<double> probs;
};

using FeatureLaw = std::variant<StandardNormal, UniformBox, DiscreteAtoms>;

void validate(const FeatureLaw& law);
std::size_t feature_dim(const FeatureLaw& law);
Features sample_features(const FeatureLaw& law, Rng& rng);

/// Finite prior: K conditional models with prior weights and one shared
/// feature law. The constructor enforces K >= 1, weights summing to one, and
/// a common feature dimension.
class FinitePrior {
 public:
  FinitePrior(std::vector<ConditionalModel> models, std::vector<double> weights,
              FeatureLaw feature_law);

  std::size_t size() const { return models_.size(); }
  std::size_t dim() const { return feature_dim(feature_law_); }
  const std::vector<ConditionalModel>& models() const { return models_; }
  const std::vector<double>& weights() const { return weights_; }
  const FeatureLaw& feature_law() const { return feature_law_; }

 private:
  std::vector<ConditionalModel> models_;
  std::vector<double> weights_;
  FeatureLaw feature_law_;
};

/// Uniform law on {n_min, ..., n_max}.
struct SizePrior {
  SizePrior(std::size_t lo, std::size_t hi);
  std::size_t n_min;
  std::size_t n_max;
};

/// Index k drawn with probability weights[k].
std::size_t sample_task(const FinitePrior& prior, Rng& rng);

Example sample_example(const ConditionalModel& model, const FeatureLaw& law, Rng& rng);

/// n iid examples: features from `law`, labels Bernoulli(p(1 | x)).
Dataset sample_dataset(const ConditionalModel& model, const FeatureLaw& law, std::size_t n,
                       Rng& rng);

std::size_t sample_size(const SizePrior& size_prior, Rng& rng);

}  // namespace pfnlab
