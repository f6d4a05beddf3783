#include <algorithm>
#include <cmath>
#include <limits>

#include "pfnlab/pretrain.hpp"

namespace pfnlab {
namespace {

void require_1d(const PretrainConfig& config) {
  if (config.prior.dim() != 1) throw std::invalid_argument("tree pretraining requires d = 1");
  if (config.mc_sets == 0) throw std::invalid_argument("pretrain: m must be >= 1");
  const auto& t = config.tree;
  if (!(t.initial_step > 0.0) || !(t.shrink > 0.0 && t.shrink <= 1.0)) {
    throw std::invalid_argument("tree search: need initial_step > 0 and shrink in (0, 1]");
  }
}

TreeParams initial_tree(const PretrainConfig& config, std::uint64_t stream) {
  Rng rng(derive_seed(derive_seed(config.seed, 3), stream));
  TreeParams tree;
  for (std::size_t s = 0; s < config.tree.splits; ++s) {
    tree.splits.push_back(sample_features(config.prior.feature_law(), rng)[0]);
  }
  std::sort(tree.splits.begin(), tree.splits.end());
  return tree;
}

// Cyclic coordinate descent over the split vectors exposed by `coords`.
// Each coordinate moves within the interval bounded by its neighbours in the
// same tree; a candidate replaces the current value only on a strict decrease.
template <class Params, class MakePredictor>
void coordinate_descent(Params& params, std::vector<std::vector<double>*> trees,
                        const TreeSearchSettings& settings, std::span<const MCSample> samples,
                        MakePredictor make, std::vector<TrainingLogRow>& log) {
  double current = mc_loss(make(params), samples);
  double step = settings.initial_step;
  const auto g = static_cast<long>(settings.candidates);
  for (std::size_t sweep = 0; sweep < settings.sweeps; ++sweep) {
    std::size_t coord = 0;
    for (auto* splits : trees) {
      for (std::size_t j = 0; j < splits->size(); ++j, ++coord) {
        const double lo = j == 0 ? -std::numeric_limits<double>::infinity() : (*splits)[j - 1];
        const double hi = j + 1 == splits->size() ? std::numeric_limits<double>::infinity()
                                                  : (*splits)[j + 1];
        const double origin = (*splits)[j];
        double best_value = origin;
        for (long k = -g; k <= g; ++k) {
          if (k == 0) continue;
          const double candidate = origin + static_cast<double>(k) * step;
          if (candidate < lo || candidate > hi) continue;
          (*splits)[j] = candidate;
          const double l = mc_loss(make(params), samples);
          if (l < current) {
            current = l;
            best_value = candidate;
          }
        }
        (*splits)[j] = best_value;
        log.push_back({sweep, coord, current});
      }
    }
    step *= settings.shrink;
  }
}

}  // namespace

PretrainResult<TreeParams> pretrain_tree(const PretrainConfig& config) {
  require_1d(config);
  const auto train = generate_mc_samples(config.prior, config.size_prior, config.mc_sets,
                                         derive_seed(config.seed, 1));
  const auto holdout = generate_mc_samples(config.prior, config.size_prior,
                                           std::max<std::size_t>(config.holdout_sets, 1),
                                           derive_seed(config.seed, 2));
  PretrainResult<TreeParams> result;
  result.params = initial_tree(config, 0);
  result.initial_holdout_loss = mc_loss(make_tree_predictor(result.params), holdout);
  coordinate_descent(result.params, {&result.params.splits}, config.tree, train,
                     [](const TreeParams& t) { return make_tree_predictor(t); }, result.log);
  result.holdout_loss = mc_loss(make_tree_predictor(result.params), holdout);
  return result;
}

PretrainResult<EnsembleParams> pretrain_ensemble(const PretrainConfig& config) {
  require_1d(config);
  if (config.tree.members == 0) throw std::invalid_argument("ensemble: K must be >= 1");
  const auto train = generate_mc_samples(config.prior, config.size_prior, config.mc_sets,
                                         derive_seed(config.seed, 1));
  const auto holdout = generate_mc_samples(config.prior, config.size_prior,
                                           std::max<std::size_t>(config.holdout_sets, 1),
                                           derive_seed(config.seed, 2));
  PretrainResult<EnsembleParams> result;
  for (std::size_t k = 0; k < config.tree.members; ++k) {
    result.params.members.push_back(initial_tree(config, k));
  }
  result.initial_holdout_loss = mc_loss(make_ensemble_predictor(result.params), holdout);
  std::vector<std::vector<double>*> coords;
  for (auto& m : result.params.members) coords.push_back(&m.splits);
  coordinate_descent(result.params, coords, config.tree, train,
                     [](const EnsembleParams& e) { return make_ensemble_predictor(e); },
                     result.log);
  result.holdout_loss = mc_loss(make_ensemble_predictor(result.params), holdout);
  return result;
}

}  // namespace pfnlab
