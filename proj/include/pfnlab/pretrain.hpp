#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfnlab/core.hpp"
#include "pfnlab/predictors.hpp"
#include "pfnlab/priors.hpp"
#include "pfnlab/transformer.hpp"

namespace pfnlab {

/// A loss evaluation produced NaN or infinity.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::size_t sample_index)
      : std::runtime_error(what), sample_index_(sample_index) {}
  std::size_t sample_index() const { return sample_index_; }

 private:
  std::size_t sample_index_;
};

/// One Monte-Carlo pre-training set: a context of size N_j and one held-out
/// query drawn from the same task.
struct MCSample {
  Dataset context;
  Example query;
};

/// m sets from Pi x Pi_N. Set j is generated from its own stream
/// derive_seed(seed, j), so any prefix of a larger draw equals a smaller draw.
std::vector<MCSample> generate_mc_samples(const FinitePrior& prior, const SizePrior& size_prior,
                                          std::size_t count, std::uint64_t seed);

/// -(1/m) sum_j log clamp(q(Y_j | X_j, D^(j))).
double mc_loss(const Predictor& predictor, std::span<const MCSample> samples);

struct WindowSearchSettings {
  BandwidthScaling scaling = BandwidthScaling::Fixed;
  double min_bandwidth = 0.01;
  double max_bandwidth = 10.0;
  /// Log-spaced grid scanned first.
  std::size_t grid_points = 41;
  /// Golden-section refinement inside the cell around the best grid point.
  bool refine = true;
  std::size_t golden_iterations = 40;
};

struct TreeSearchSettings {
  std::size_t splits = 3;
  std::size_t members = 4;
  std::size_t sweeps = 6;
  /// Candidate offsets per side: theta_j + k * step for |k| <= candidates.
  std::size_t candidates = 4;
  double initial_step = 0.5;
  double shrink = 0.5;
};

struct SgdSettings {
  std::size_t hidden = 16;
  std::size_t heads = 4;
  double learning_rate = 0.05;
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::size_t workers = 1;
};

struct PretrainConfig {
  FinitePrior prior;
  SizePrior size_prior;
  std::size_t mc_sets = 1000;
  std::size_t holdout_sets = 500;
  std::uint64_t seed = 0;
  WindowSearchSettings window{};
  TreeSearchSettings tree{};
  SgdSettings sgd{};
};

struct TrainingLogRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
};

template <class Params>
struct PretrainResult {
  Params params;
  std::vector<TrainingLogRow> log;
  double initial_holdout_loss = 0.0;
  double holdout_loss = 0.0;
};

// Window smoother -------------------------------------------------------------

/// Monte-Carlo loss of a window smoother as a function of the bandwidth.
/// Distances are sorted once so each evaluation costs O(m log N).
class WindowLoss {
 public:
  WindowLoss(std::span<const MCSample> samples, BandwidthScaling scaling);
  double operator()(double bandwidth) const;

 private:
  struct Entry {
    std::vector<double> distances;            // ascending
    std::vector<std::vector<double>> counts;  // counts[c][i]: label c among first i
    std::size_t label = 0;
    double scale = 1.0;                       // a_N, or 1 in fixed mode
  };
  std::vector<Entry> entries_;
  std::size_t classes_ = 2;
};

/// Grid scan over log-bandwidth, optionally refined by golden-section search.
/// Log rows: epoch 0 holds the grid losses, epoch 1 the best loss after each
/// golden-section iteration.
WindowSmootherParams fit_window(std::span<const MCSample> samples,
                                const WindowSearchSettings& settings,
                                std::vector<TrainingLogRow>* log = nullptr);

PretrainResult<WindowSmootherParams> pretrain_window(const PretrainConfig& config);

// Trees and BIC ensembles -------------------------------------------------------

/// Cyclic coordinate descent over split locations on a grid whose step shrinks
/// geometrically each sweep. Log rows: epoch = sweep, batch = coordinate.
PretrainResult<TreeParams> pretrain_tree(const PretrainConfig& config);
PretrainResult<EnsembleParams> pretrain_ensemble(const PretrainConfig& config);

// Transformer -------------------------------------------------------------------

/// Loss -log q_theta(Y | X, D) (unclamped, via log-softmax) and its exact
/// reverse-mode gradient with respect to every parameter, packed in the
/// parameter layout.
struct LossGradient {
  double loss = 0.0;
  TransformerParams gradient;
};

LossGradient transformer_grad(const TransformerParams& params, const MCSample& sample);

/// Mini-batch SGD with the analytic gradient over a fixed Monte-Carlo set.
/// Log rows: one per mini-batch with the batch-mean loss.
PretrainResult<TransformerParams> pretrain_transformer(const PretrainConfig& config);

}  // namespace pfnlab
