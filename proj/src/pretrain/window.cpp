#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pfnlab/pretrain.hpp"

namespace pfnlab {

WindowLoss::WindowLoss(std::span<const MCSample> samples, BandwidthScaling scaling) {
  if (samples.empty()) throw std::invalid_argument("WindowLoss: no samples");
  classes_ = samples.front().context.num_classes();
  entries_.reserve(samples.size());
  for (const auto& s : samples) {
    const Dataset& ctx = s.context;
    if (ctx.empty()) throw std::invalid_argument("WindowLoss: empty context");
    const std::size_t n = ctx.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(ctx[i].features, s.query.features);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    Entry e;
    e.label = s.query.label;
    e.distances.resize(n);
    e.counts.assign(classes_, std::vector<double>(n + 1, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      e.distances[i] = dist[order[i]];
      for (std::size_t c = 0; c < classes_; ++c) e.counts[c][i + 1] = e.counts[c][i];
      e.counts[ctx[order[i]].label][i + 1] += 1.0;
    }
    e.scale = effective_bandwidth({1.0, scaling}, n, ctx.dim());
    entries_.push_back(std::move(e));
  }
}

double WindowLoss::operator()(double bandwidth) const {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("WindowLoss: bandwidth must be > 0");
  double total = 0.0;
  for (const auto& e : entries_) {
    // Same arithmetic as window_predict: squared distance < b^2.
    const double b = e.scale * bandwidth;
    const double b2 = b * b;
    const auto inside = static_cast<std::size_t>(
        std::lower_bound(e.distances.begin(), e.distances.end(), b2) - e.distances.begin());
    double p = 1.0 / static_cast<double>(classes_);
    if (inside > 0) p = e.counts[e.label][inside] / static_cast<double>(inside);
    total -= std::log(clamp_probability(p));
  }
  return total / static_cast<double>(entries_.size());
}

WindowSmootherParams fit_window(std::span<const MCSample> samples,
                                const WindowSearchSettings& settings,
                                std::vector<TrainingLogRow>* log) {
  if (!(settings.min_bandwidth > 0.0 && settings.min_bandwidth < settings.max_bandwidth)) {
    throw std::invalid_argument("fit_window: need 0 < min_bandwidth < max_bandwidth");
  }
  if (settings.grid_points < 2) throw std::invalid_argument("fit_window: grid_points must be >= 2");
  const WindowLoss loss(samples, settings.scaling);
  const double lo = std::log(settings.min_bandwidth);
  const double hi = std::log(settings.max_bandwidth);
  const std::size_t g = settings.grid_points;
  auto grid_at = [&](std::size_t i) {
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(g - 1);
  };

  std::size_t best_i = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < g; ++i) {
    const double l = loss(std::exp(grid_at(i)));
    if (!std::isfinite(l)) throw NonFiniteLoss("fit_window: non-finite grid loss", 0);
    if (log) log->push_back({0, i, l});
    if (l < best_loss) {
      best_loss = l;
      best_i = i;
    }
  }
  double best_t = grid_at(best_i);
  if (!settings.refine) return {std::exp(best_t), settings.scaling};

  // Golden-section search on log bandwidth over the neighbouring grid cells.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = grid_at(best_i == 0 ? 0 : best_i - 1);
  double b = grid_at(std::min(best_i + 1, g - 1));
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = loss(std::exp(c));
  double fd = loss(std::exp(d));
  for (std::size_t it = 0; it < settings.golden_iterations; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = loss(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = loss(std::exp(d));
    }
    if (fc < best_loss) {
      best_loss = fc;
      best_t = c;
    }
    if (fd < best_loss) {
      best_loss = fd;
      best_t = d;
    }
    if (log) log->push_back({1, it, best_loss});
  }
  return {std::exp(best_t), settings.scaling};
}

PretrainResult<WindowSmootherParams> pretrain_window(const PretrainConfig& config) {
  if (config.mc_sets == 0) throw std::invalid_argument("pretrain: m must be >= 1");
  const auto train = generate_mc_samples(config.prior, config.size_prior, config.mc_sets,
                                         derive_seed(config.seed, 1));
  const auto holdout = generate_mc_samples(config.prior, config.size_prior,
                                           std::max<std::size_t>(config.holdout_sets, 1),
                                           derive_seed(config.seed, 2));
  PretrainResult<WindowSmootherParams> result;
  result.params = fit_window(train, config.window, &result.log);
  const double mid = std::sqrt(config.window.min_bandwidth * config.window.max_bandwidth);
  result.initial_holdout_loss = mc_loss(make_window_predictor({mid, config.window.scaling}), holdout);
  result.holdout_loss = mc_loss(make_window_predictor(result.params), holdout);
  return result;
}

}  // namespace pfnlab
