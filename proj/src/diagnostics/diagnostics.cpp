#include "pfnlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pfnlab {
namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Unbiased sample variance.
double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance_of(v) / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

double max_abs_change(const ClassDistribution& a, const ClassDistribution& b) {
  double m = 0.0;
  for (std::size_t y = 0; y < a.size(); ++y) m = std::max(m, std::abs(a[y] - b[y]));
  return m;
}

Features resolve_test_point(const std::optional<Features>& fixed, const FeatureLaw& law,
                            std::uint64_t seed) {
  if (fixed) {
    if (fixed->size() != feature_dim(law)) {
      throw std::invalid_argument("test point dimension does not match the feature law");
    }
    return *fixed;
  }
  Rng rng(derive_seed(seed, 0));
  return sample_features(law, rng);
}

void require_grid(const std::vector<std::size_t>& grid, const char* who) {
  if (grid.empty()) throw std::invalid_argument(std::string(who) + ": empty n grid");
  for (std::size_t n : grid) {
    if (n == 0) throw std::invalid_argument(std::string(who) + ": n must be >= 1");
  }
}

}  // namespace

RateFit fit_rate(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 pairs");
  std::vector<double> lx, ly;
  for (const auto& [n, v] : pairs) {
    if (!(n > 0.0) || !(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("fit_rate: n and values must be positive and finite");
    }
    lx.push_back(std::log(n));
    ly.push_back(std::log(v));
  }
  const double mx = mean_of(lx);
  const double my = mean_of(ly);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_rate: all n are equal");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

BiasVarianceReport bias_variance(const Predictor& predictor, const ConditionalModel& p0,
                                 const FeatureLaw& law, const BiasVarianceSettings& settings) {
  require_grid(settings.n_grid, "bias_variance");
  const std::size_t M = settings.replicates;
  const std::size_t T = settings.test_points;
  if (M < 2 || T < 1) throw std::invalid_argument("bias_variance: need M >= 2 and T >= 1");

  std::vector<Features> tests;
  std::vector<double> truth;
  {
    Rng rng(derive_seed(settings.seed, 0));
    for (std::size_t t = 0; t < T; ++t) {
      tests.push_back(sample_features(law, rng));
      truth.push_back(label_prob(p0, settings.label, tests.back()));
    }
  }

  BiasVarianceReport report;
  std::vector<double> q(M * T);
  for (std::size_t n : settings.n_grid) {
    const std::uint64_t base = derive_seed(settings.seed, n);
    parallel_for(M, settings.workers, [&](std::size_t r) {
      Rng rng(derive_seed(base, r));
      const Dataset data = sample_dataset(p0, law, n, rng);
      for (std::size_t t = 0; t < T; ++t) q[r * T + t] = predictor(tests[t], data)[settings.label];
    });

    std::vector<double> sq_bias(T), var(T), column(M);
    std::vector<double> replicate_err(M, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t r = 0; r < M; ++r) column[r] = q[r * T + t];
      const double m = mean_of(column);
      sq_bias[t] = (m - truth[t]) * (m - truth[t]);
      var[t] = variance_of(column);
      for (std::size_t r = 0; r < M; ++r) {
        replicate_err[r] += (column[r] - truth[t]) * (column[r] - truth[t]);
      }
    }
    for (double& e : replicate_err) e /= static_cast<double>(T);

    BiasVarianceRow row;
    row.n = n;
    row.mean_sq_bias = mean_of(sq_bias);
    row.variance = mean_of(var);
    row.mse = row.mean_sq_bias + row.variance;
    row.replicates = M;
    row.test_points = T;
    row.seed = settings.seed;
    row.direct_mse = mean_of(replicate_err);
    row.cross_term = row.direct_mse - row.mse;
    row.direct_mse_se = standard_error(replicate_err);
    row.bias_se = standard_error(sq_bias);
    row.variance_se = standard_error(var);
    report.rows.push_back(row);
  }
  return report;
}

SensitivityEstimate sensitivity_probe(const Predictor& predictor, const ConditionalModel& p0,
                                      const FeatureLaw& law, const SensitivitySettings& settings) {
  require_grid(settings.n_grid, "sensitivity_probe");
  if (settings.trials < 10) throw std::invalid_argument("sensitivity_probe: trials must be >= 10");
  SensitivityEstimate est;
  est.test_point = resolve_test_point(settings.test_point, law, settings.seed);

  std::vector<double> change(settings.trials);
  for (std::size_t n : settings.n_grid) {
    const std::uint64_t base = derive_seed(settings.seed, n);
    parallel_for(settings.trials, settings.workers, [&](std::size_t t) {
      Rng rng(derive_seed(base, t));
      const Dataset data = sample_dataset(p0, law, n, rng);
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      std::vector<Example> ex = data.examples();
      ex[i] = sample_example(p0, law, rng);
      const Dataset replaced(data.dim(), data.num_classes(), std::move(ex));
      change[t] = max_abs_change(predictor(est.test_point, data),
                                 predictor(est.test_point, replaced));
    });
    SensitivityRow row;
    row.n = n;
    row.max_change = *std::max_element(change.begin(), change.end());
    row.mean_change = mean_of(change);
    row.trials = settings.trials;
    est.rows.push_back(row);
  }

  bool positive = true;
  for (const auto& r : est.rows) positive = positive && r.max_change > 0.0;
  if (est.rows.size() >= 4 && positive) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : est.rows) pairs.emplace_back(static_cast<double>(r.n), r.max_change);
    const RateFit fit = fit_rate(pairs);
    est.fit_defined = true;
    est.alpha = -fit.slope;
    est.lipschitz = std::exp(fit.intercept);
    est.r_squared = fit.r_squared;
  }
  return est;
}

LocalityProbeReport locality_probe(const Predictor& predictor, const ConditionalModel& p0,
                                   const ConditionalModel& p_tilde, const FeatureLaw& law,
                                   const LocalitySettings& settings) {
  require_grid(settings.n_grid, "locality_probe");
  if (settings.replicates == 0) throw std::invalid_argument("locality_probe: replicates must be >= 1");
  if (settings.rule == EpsilonRule::Fixed && !(settings.epsilon > 0.0)) {
    throw std::invalid_argument("locality_probe: epsilon must be > 0");
  }
  LocalityProbeReport report;
  const std::size_t R = settings.replicates;
  std::vector<double> change(R), eps(R);
  for (std::size_t n : settings.n_grid) {
    const std::uint64_t base = derive_seed(settings.seed, n);
    parallel_for(R, settings.workers, [&](std::size_t r) {
      Rng rng(derive_seed(base, r));
      const Features x = settings.test_point ? *settings.test_point : sample_features(law, rng);
      const Dataset data = sample_dataset(p0, law, n, rng);
      double e = settings.epsilon;
      if (settings.rule == EpsilonRule::KnnRadius) {
        const std::size_t k = neighbor_count(settings.localizer, n, data.dim());
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = std::sqrt(squared_distance(data[i].features, x));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        e = d[k - 1];
      }
      Dataset tilde = data;
      for (std::size_t i = 0; i < n; ++i) {
        // Draw for every sample so the stream does not depend on epsilon.
        const double u = rng.uniform();
        if (std::sqrt(squared_distance(data[i].features, x)) > e) {
          tilde.set_label(i, u < prob_one(p_tilde, data[i].features) ? 1 : 0);
        }
      }
      eps[r] = e;
      change[r] = max_abs_change(predictor(x, data), predictor(x, tilde));
    });
    LocalityRow row;
    row.n = n;
    row.epsilon = mean_of(eps);
    row.mean_change = mean_of(change);
    row.max_change = *std::max_element(change.begin(), change.end());
    row.replicates = R;
    report.rows.push_back(row);
  }
  return report;
}

Predictor make_first_label_predictor() {
  return [](std::span<const double>, const Dataset& data) {
    if (data.empty()) return ClassDistribution::uniform(data.num_classes());
    std::vector<double> p(data.num_classes(), 0.0);
    p[data[0].label] = 1.0;
    return ClassDistribution(std::move(p));
  };
}

double symmetrized_output(const Predictor& f, std::span<const double> x, const Dataset& data,
                          std::size_t label, std::size_t permutation_samples, Rng& rng) {
  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double total = 0.0;
  std::size_t count = 0;
  if (n <= 8) {
    do {
      total += f(x, data.subset(perm))[label];
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    if (permutation_samples == 0) {
      throw std::invalid_argument("symmetrized_output: permutation_samples must be >= 1");
    }
    for (std::size_t s = 0; s < permutation_samples; ++s) {
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(std::span<std::size_t>(perm));
      total += f(x, data.subset(perm))[label];
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

SymmetrizeReport symmetrize_check(const Predictor& f, const ConditionalModel& p0,
                                  const FeatureLaw& law, const SymmetrizeSettings& settings) {
  if (settings.n == 0 || settings.replicates < 2) {
    throw std::invalid_argument("symmetrize_check: need n >= 1 and replicates >= 2");
  }
  const std::size_t R = settings.replicates;
  std::vector<double> raw(R), sym(R);
  for (std::size_t r = 0; r < R; ++r) {
    Rng rng(derive_seed(settings.seed, r));
    const Features x = sample_features(law, rng);
    const Dataset data = sample_dataset(p0, law, settings.n, rng);
    raw[r] = f(x, data)[settings.label];
    sym[r] = symmetrized_output(f, x, data, settings.label, settings.permutation_samples, rng);
  }
  SymmetrizeReport rep;
  rep.mean_f = mean_of(raw);
  rep.variance_f = variance_of(raw);
  rep.mean_symmetrized = mean_of(sym);
  rep.variance_symmetrized = variance_of(sym);
  std::vector<double> diff(R);
  for (std::size_t r = 0; r < R; ++r) {
    diff[r] = (raw[r] - rep.mean_f) * (raw[r] - rep.mean_f) -
              (sym[r] - rep.mean_symmetrized) * (sym[r] - rep.mean_symmetrized);
  }
  rep.variance_gap_se = standard_error(diff);
  rep.exact = settings.n <= 8;
  rep.replicates = R;
  return rep;
}

Eigen::VectorXd tilted_mean(const Eigen::VectorXd& w, const ConditionalModel& p0,
                            const FeatureLaw& law, std::size_t mc_samples, Rng& rng) {
  const std::size_t d = feature_dim(law);
  if (static_cast<std::size_t>(w.size()) != d + 1) {
    throw std::invalid_argument("tilted_mean: tilt vector must have length d + 1");
  }
  if (mc_samples == 0) throw std::invalid_argument("tilted_mean: mc_samples must be >= 1");
  std::vector<Features> xs(mc_samples);
  std::vector<double> logw(2 * mc_samples);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < mc_samples; ++s) {
    xs[s] = sample_features(law, rng);
    double base = 0.0;
    for (std::size_t i = 0; i < d; ++i) base += w[static_cast<Eigen::Index>(i + 1)] * xs[s][i];
    for (std::size_t y = 0; y < 2; ++y) {
      const double p = label_prob(p0, y, xs[s]);
      const double lw = p > 0.0 ? std::log(p) + base + w[0] * static_cast<double>(y)
                                : -std::numeric_limits<double>::infinity();
      logw[2 * s + y] = lw;
      hi = std::max(hi, lw);
    }
  }
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
  double total = 0.0;
  for (std::size_t s = 0; s < mc_samples; ++s) {
    for (std::size_t y = 0; y < 2; ++y) {
      const double wt = std::exp(logw[2 * s + y] - hi);
      if (wt == 0.0) continue;
      total += wt;
      acc[0] += wt * static_cast<double>(y);
      for (std::size_t i = 0; i < d; ++i) acc[static_cast<Eigen::Index>(i + 1)] += wt * xs[s][i];
    }
  }
  return acc / total;
}

TiltReport tilt_limit(const TransformerParams& params, std::span<const double> x,
                      const ConditionalModel& p0, const FeatureLaw& law,
                      const TiltSettings& settings) {
  validate(params);
  if (settings.mc_samples < 10000) throw std::invalid_argument("tilt_limit: mc_samples must be >= 1e4");
  if (settings.replicates == 0) throw std::invalid_argument("tilt_limit: replicates must be >= 1");
  if (params.classes != 2) throw std::invalid_argument("tilt_limit: binary models only");
  const Eigen::VectorXd v = query_token(x);
  TiltReport report;
  report.limit = Eigen::VectorXd::Zero(v.size());
  for (std::size_t h = 0; h < params.heads(); ++h) {
    Rng rng(derive_seed(derive_seed(settings.seed, 0), h));
    const Eigen::VectorXd w = params.query[h].transpose() * v;
    report.head_limits.push_back(params.value[h] * tilted_mean(w, p0, law, settings.mc_samples, rng));
    report.limit += report.head_limits.back();
  }
  for (std::size_t n : settings.n_grid) {
    std::vector<double> disc(settings.replicates);
    for (std::size_t r = 0; r < settings.replicates; ++r) {
      Rng rng(derive_seed(derive_seed(settings.seed, n), r));
      const Dataset data = sample_dataset(p0, law, n, rng);
      const auto out = transformer_forward(params, x, data);
      disc[r] = (out.trace.u_prime - report.limit).norm();
    }
    TiltRow row;
    row.n = n;
    row.median_discrepancy = median_of(disc);
    row.mean_discrepancy = mean_of(disc);
    row.replicates = settings.replicates;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace pfnlab
