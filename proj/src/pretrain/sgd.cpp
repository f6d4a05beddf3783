#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pfnlab/pretrain.hpp"

namespace pfnlab {
namespace {

constexpr double kGammaFloor = 1e-6;

struct LayerNormGrad {
  Eigen::VectorXd input;
  std::array<double, 3> gamma{};
};

// Reverse pass of y = g1 (t - avg t) / (||t - avg t|| + |g2|) + g3.
LayerNormGrad layer_norm_backward(const Eigen::VectorXd& t, const std::array<double, 3>& g,
                                  const Eigen::VectorXd& dy) {
  const Eigen::VectorXd c = t.array() - t.mean();
  const double r = c.norm();
  const double s = r + std::abs(g[1]);
  const double dy_c = dy.dot(c);
  LayerNormGrad out;
  out.gamma[0] = dy_c / s;
  out.gamma[1] = -(g[1] > 0.0 ? 1.0 : -1.0) * g[0] * dy_c / (s * s);
  out.gamma[2] = dy.sum();
  Eigen::VectorXd dc = (g[0] / s) * dy;
  if (r > 0.0) dc -= (g[0] * dy_c / (s * s * r)) * c;
  out.input = dc.array() - dc.mean();
  return out;
}

void add_scaled(TransformerParams& p, double alpha, const TransformerParams& g) {
  for (std::size_t h = 0; h < p.heads(); ++h) {
    p.query[h] += alpha * g.query[h];
    p.value[h] += alpha * g.value[h];
  }
  p.ff_in += alpha * g.ff_in;
  p.ff_out += alpha * g.ff_out;
  p.readout += alpha * g.readout;
  for (std::size_t i = 0; i < 3; ++i) p.gamma[i] += alpha * g.gamma[i];
}

TransformerParams zero_like(const TransformerParams& p) {
  TransformerParams z = zero_transformer(p.dim, p.classes, p.hidden, p.heads());
  z.gamma = {0.0, 0.0, 0.0};
  return z;
}

}  // namespace

LossGradient transformer_grad(const TransformerParams& params, const MCSample& sample) {
  const AttentionTrace tr = transformer_trace(params, sample.query.features, sample.context);
  const auto y = static_cast<Eigen::Index>(sample.query.label);

  const double hi = tr.logits.maxCoeff();
  const double lse = hi + std::log((tr.logits.array() - hi).exp().sum());
  LossGradient result;
  result.loss = lse - tr.logits[y];
  TransformerParams& g = result.gradient;
  g = zero_like(params);

  Eigen::VectorXd dlogits = (tr.logits.array() - lse).exp();
  dlogits[y] -= 1.0;
  g.readout = dlogits * tr.z.transpose();
  const Eigen::VectorXd dz = params.readout.transpose() * dlogits;

  const auto ln2 = layer_norm_backward(tr.u + tr.z_prime, params.gamma, dz);
  const Eigen::VectorXd relu = tr.hidden_pre.cwiseMax(0.0);
  g.ff_out = ln2.input * relu.transpose();
  Eigen::VectorXd dpre = params.ff_out.transpose() * ln2.input;
  for (Eigen::Index i = 0; i < dpre.size(); ++i) {
    if (!(tr.hidden_pre[i] > 0.0)) dpre[i] = 0.0;
  }
  g.ff_in = dpre * tr.u.transpose();
  const Eigen::VectorXd du = ln2.input + params.ff_in.transpose() * dpre;

  const auto ln1 = layer_norm_backward(tr.query_token + tr.u_prime, params.gamma, du);
  for (std::size_t i = 0; i < 3; ++i) g.gamma[i] = ln1.gamma[i] + ln2.gamma[i];
  const Eigen::VectorXd& du_prime = ln1.input;

  const Dataset& data = sample.context;
  const auto D = static_cast<Eigen::Index>(params.dim + 1);
  Eigen::VectorXd token(D);
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const auto hh = static_cast<Eigen::Index>(h);
    g.value[h] = du_prime * tr.pooled.col(hh).transpose();
    const Eigen::VectorXd dpooled = params.value[h].transpose() * du_prime;
    const double centre = dpooled.dot(tr.pooled.col(hh));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
    for (std::size_t j = 0; j < data.size(); ++j) {
      token = context_token(data[j]);
      const double a = tr.attention(hh, static_cast<Eigen::Index>(j));
      acc += (a * (dpooled.dot(token) - centre)) * token;
    }
    g.query[h] = tr.query_token * acc.transpose();
  }
  return result;
}

PretrainResult<TransformerParams> pretrain_transformer(const PretrainConfig& config) {
  const SgdSettings& sgd = config.sgd;
  if (config.mc_sets == 0) throw std::invalid_argument("pretrain: m must be >= 1");
  if (!(sgd.learning_rate > 0.0)) throw std::invalid_argument("pretrain: learning rate must be > 0");
  if (sgd.batch_size == 0) throw std::invalid_argument("pretrain: batch size must be >= 1");
  const auto train = generate_mc_samples(config.prior, config.size_prior, config.mc_sets,
                                         derive_seed(config.seed, 1));
  const auto holdout = generate_mc_samples(config.prior, config.size_prior,
                                           std::max<std::size_t>(config.holdout_sets, 1),
                                           derive_seed(config.seed, 2));
  Rng init_rng(derive_seed(config.seed, 3));
  PretrainResult<TransformerParams> result;
  TransformerParams& params = result.params;
  params = init_transformer(config.prior.dim(), 2, sgd.hidden, sgd.heads, init_rng);
  result.initial_holdout_loss = mc_loss(make_transformer_predictor(params), holdout);

  std::vector<std::size_t> order(train.size());
  std::vector<LossGradient> grads;
  for (std::size_t epoch = 0; epoch < sgd.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(derive_seed(config.seed, 4), epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += sgd.batch_size, ++batch) {
      const std::size_t count = std::min(sgd.batch_size, order.size() - start);
      grads.assign(count, LossGradient{});
      parallel_for(count, sgd.workers, [&](std::size_t i) {
        grads[i] = transformer_grad(params, train[order[start + i]]);
      });
      TransformerParams total = zero_like(params);
      double loss = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(grads[i].loss)) {
          std::ostringstream msg;
          msg << "pretrain_transformer: non-finite loss at sample " << order[start + i]
              << " (epoch " << epoch << ", batch " << batch << ")";
          throw NonFiniteLoss(msg.str(), order[start + i]);
        }
        loss += grads[i].loss;
        add_scaled(total, 1.0, grads[i].gradient);
      }
      add_scaled(params, -sgd.learning_rate / static_cast<double>(count), total);
      if (std::abs(params.gamma[1]) < kGammaFloor) {
        params.gamma[1] = params.gamma[1] < 0.0 ? -kGammaFloor : kGammaFloor;
      }
      result.log.push_back({epoch, batch, loss / static_cast<double>(count)});
    }
  }
  validate(params);
  result.holdout_loss = mc_loss(make_transformer_predictor(params), holdout);
  return result;
}

}  // namespace pfnlab
