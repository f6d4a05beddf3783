#include "pfnlab/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pfnlab {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
  }
}

}  // namespace

void validate(const ConditionalModel& model) {
  std::visit(Overloaded{
                 [](const ConstantBernoulli& m) {
                   if (!(m.p1 >= 0.0 && m.p1 <= 1.0)) {
                     throw std::invalid_argument("ConstantBernoulli: p1 outside [0, 1]");
                   }
                 },
                 [](const Logistic& m) {
                   if (m.weights.empty()) throw std::invalid_argument("Logistic: empty weights");
                   require_finite(m.weights, "Logistic");
                   if (!std::isfinite(m.offset)) throw std::invalid_argument("Logistic: offset");
                 },
                 [](const SineTask& m) {
                   if (!(m.amplitude >= 0.0 && m.amplitude <= 1.0)) {
                     throw std::invalid_argument("SineTask: amplitude outside [0, 1]");
                   }
                   if (m.frequency.empty()) {
                     throw std::invalid_argument("SineTask: empty frequency");
                   }
                   require_finite(m.frequency, "SineTask");
                   if (!std::isfinite(m.phase)) throw std::invalid_argument("SineTask: phase");
                 },
             },
             model);
}

std::optional<std::size_t> model_dim(const ConditionalModel& model) {
  return std::visit(Overloaded{
                        [](const ConstantBernoulli&) -> std::optional<std::size_t> {
                          return std::nullopt;
                        },
                        [](const Logistic& m) -> std::optional<std::size_t> {
                          return m.weights.size();
                        },
                        [](const SineTask& m) -> std::optional<std::size_t> {
                          return m.frequency.size();
                        },
                    },
                    model);
}

double prob_one(const ConditionalModel& model, std::span<const double> x) {
  const double p = std::visit(
      Overloaded{
          [](const ConstantBernoulli& m) { return m.p1; },
          [&](const Logistic& m) {
            const double t = dot(m.weights, x) + m.offset;
            // Evaluate on the side where exp cannot overflow.
            if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
            const double e = std::exp(t);
            return e / (1.0 + e);
          },
          [&](const SineTask& m) {
            return 0.5 + 0.5 * m.amplitude * std::sin(dot(m.frequency, x) + m.phase);
          },
      },
      model);
  return std::clamp(p, 0.0, 1.0);
}

ClassDistribution class_probs(const ConditionalModel& model, std::span<const double> x) {
  return ClassDistribution::binary(prob_one(model, x));
}

double label_prob(const ConditionalModel& model, std::size_t label,
                  std::span<const double> x) {
  const double p1 = prob_one(model, x);
  return label == 1 ? p1 : 1.0 - p1;
}

void validate(const FeatureLaw& law) {
  std::visit(Overloaded{
                 [](const StandardNormal& l) {
                   if (l.dim == 0) throw std::invalid_argument("StandardNormal: dim 0");
                 },
                 [](const UniformBox& l) {
                   if (l.dim == 0) throw std::invalid_argument("UniformBox: dim 0");
                   if (!(l.lo < l.hi) || !std::isfinite(l.lo) || !std::isfinite(l.hi)) {
                     throw std::invalid_argument("UniformBox: need finite lo < hi");
                   }
                 },
                 [](const DiscreteAtoms& l) {
                   if (l.atoms.empty() || l.atoms.size() != l.probs.size()) {
                     throw std::invalid_argument("DiscreteAtoms: atoms/probs mismatch");
                   }
                   const std::size_t d = l.atoms.front().size();
                   double sum = 0.0;
                   for (std::size_t i = 0; i < l.atoms.size(); ++i) {
                     if (l.atoms[i].size() != d || d == 0) {
                       throw std::invalid_argument("DiscreteAtoms: ragged atoms");
                     }
                     require_finite(l.atoms[i], "DiscreteAtoms");
                     if (!(l.probs[i] >= 0.0)) {
                       throw std::invalid_argument("DiscreteAtoms: negative probability");
                     }
                     sum += l.probs[i];
                   }
                   if (std::abs(sum - 1.0) > 1e-12) {
                     throw std::invalid_argument("DiscreteAtoms: probabilities must sum to 1");
                   }
                 },
             },
             law);
}

std::size_t feature_dim(const FeatureLaw& law) {
  return std::visit(Overloaded{
                        [](const StandardNormal& l) { return l.dim; },
                        [](const UniformBox& l) { return l.dim; },
                        [](const DiscreteAtoms& l) { return l.atoms.front().size(); },
                    },
                    law);
}

Features sample_features(const FeatureLaw& law, Rng& rng) {
  return std::visit(Overloaded{
                        [&](const StandardNormal& l) {
                          return sample_standard_normal_vector(rng, l.dim);
                        },
                        [&](const UniformBox& l) {
                          Features x(l.dim);
                          for (double& v : x) v = rng.uniform(l.lo, l.hi);
                          return x;
                        },
                        [&](const DiscreteAtoms& l) {
                          const double u = rng.uniform();
                          double cum = 0.0;
                          for (std::size_t i = 0; i < l.atoms.size(); ++i) {
                            cum += l.probs[i];
                            if (u < cum) return l.atoms[i];
                          }
                          return l.atoms.back();
                        },
                    },
                    law);
}

FinitePrior::FinitePrior(std::vector<ConditionalModel> models, std::vector<double> weights,
                         FeatureLaw feature_law)
    : models_(std::move(models)), weights_(std::move(weights)),
      feature_law_(std::move(feature_law)) {
  if (models_.empty()) throw std::invalid_argument("FinitePrior: K must be >= 1");
  if (models_.size() != weights_.size()) {
    throw std::invalid_argument("FinitePrior: models and weights differ in length");
  }
  validate(feature_law_);
  const std::size_t d = feature_dim(feature_law_);
  double sum = 0.0;
  for (std::size_t k = 0; k < models_.size(); ++k) {
    validate(models_[k]);
    if (auto md = model_dim(models_[k]); md && *md != d) {
      std::ostringstream msg;
      msg << "FinitePrior: model " << k << " has dimension " << *md << ", feature law " << d;
      throw std::invalid_argument(msg.str());
    }
    if (!(weights_[k] >= 0.0)) throw std::invalid_argument("FinitePrior: negative weight");
    sum += weights_[k];
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("FinitePrior: weights must sum to 1");
  }
}

SizePrior::SizePrior(std::size_t lo, std::size_t hi) : n_min(lo), n_max(hi) {
  if (lo < 1 || lo > hi) throw std::invalid_argument("SizePrior: need 1 <= n_min <= n_max");
}

std::size_t sample_task(const FinitePrior& prior, Rng& rng) {
  const auto& w = prior.weights();
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] > 0.0) last_positive = k;
    cum += w[k];
    if (u < cum && w[k] > 0.0) return k;
  }
  // Only reachable when rounding leaves the cumulative sum just below u.
  return last_positive;
}

Example sample_example(const ConditionalModel& model, const FeatureLaw& law, Rng& rng) {
  Example e;
  e.features = sample_features(law, rng);
  e.label = rng.bernoulli(prob_one(model, e.features)) ? 1 : 0;
  return e;
}

Dataset sample_dataset(const ConditionalModel& model, const FeatureLaw& law, std::size_t n,
                       Rng& rng) {
  std::vector<Example> examples;
  examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) examples.push_back(sample_example(model, law, rng));
  return Dataset(feature_dim(law), 2, std::move(examples));
}

std::size_t sample_size(const SizePrior& size_prior, Rng& rng) {
  return static_cast<std::size_t>(rng.uniform_int(size_prior.n_min, size_prior.n_max));
}

}  // namespace pfnlab
