#include "pfnlab/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pfnlab {
namespace {

void fill_uniform(Eigen::MatrixXd& m, double scale, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-scale, scale);
  }
}

void check_shape(const Eigen::MatrixXd& m, std::size_t rows, std::size_t cols,
                 const char* name) {
  if (static_cast<std::size_t>(m.rows()) != rows || static_cast<std::size_t>(m.cols()) != cols) {
    std::ostringstream msg;
    msg << "TransformerParams: " << name << " is " << m.rows() << "x" << m.cols()
        << ", expected " << rows << "x" << cols;
    throw std::invalid_argument(msg.str());
  }
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string("TransformerParams: non-finite entry in ") + name);
  }
}

template <class F>
void for_each_matrix(TransformerParams& p, F&& f) {
  for (auto& m : p.query) f(m);
  for (auto& m : p.value) f(m);
  f(p.ff_in);
  f(p.ff_out);
  f(p.readout);
}

template <class F>
void for_each_matrix(const TransformerParams& p, F&& f) {
  for (const auto& m : p.query) f(m);
  for (const auto& m : p.value) f(m);
  f(p.ff_in);
  f(p.ff_out);
  f(p.readout);
}

// Attention pooling: pooled.col(h) = sum_j a_j^(h) V_j. Writes the attention
// matrix when requested.
void attend(const TransformerParams& p, const Eigen::VectorXd& v, const Dataset& data,
            Eigen::MatrixXd* attention, Eigen::MatrixXd& pooled) {
  const std::size_t n = data.size();
  const std::size_t d = p.dim;
  const std::size_t heads = p.heads();
  pooled.setZero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(heads));
  if (attention) attention->resize(static_cast<Eigen::Index>(heads), static_cast<Eigen::Index>(n));
  std::vector<double> weight(n);
  for (std::size_t h = 0; h < heads; ++h) {
    // v' Wq V_j = (Wq' v) . V_j
    const Eigen::VectorXd w = p.query[h].transpose() * v;
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const Example& e = data[j];
      double s = w[0] * static_cast<double>(e.label);
      for (std::size_t i = 0; i < d; ++i) s += w[static_cast<Eigen::Index>(i + 1)] * e.features[i];
      weight[j] = s;
      hi = std::max(hi, s);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      weight[j] = std::exp(weight[j] - hi);
      total += weight[j];
    }
    auto col = pooled.col(static_cast<Eigen::Index>(h));
    for (std::size_t j = 0; j < n; ++j) {
      const double a = weight[j] / total;
      if (attention) (*attention)(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(j)) = a;
      const Example& e = data[j];
      col[0] += a * static_cast<double>(e.label);
      for (std::size_t i = 0; i < d; ++i) col[static_cast<Eigen::Index>(i + 1)] += a * e.features[i];
    }
  }
}

ClassDistribution softmax_distribution(const Eigen::VectorXd& logits) {
  const double hi = logits.maxCoeff();
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[static_cast<Eigen::Index>(k)] - hi);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return ClassDistribution(std::move(p));
}

void check_inputs(const TransformerParams& params, std::span<const double> x,
                  const Dataset& data) {
  if (data.empty()) throw EmptyContext("transformer_forward: empty context");
  if (x.size() != params.dim || data.dim() != params.dim) {
    throw std::invalid_argument("transformer_forward: feature dimension mismatch");
  }
  if (data.num_classes() != params.classes) {
    throw std::invalid_argument("transformer_forward: class count mismatch");
  }
}

}  // namespace

TransformerParams zero_transformer(std::size_t dim, std::size_t classes, std::size_t hidden,
                                   std::size_t heads) {
  if (dim == 0 || classes < 2 || hidden == 0 || heads == 0) {
    throw std::invalid_argument("zero_transformer: all sizes must be positive, classes >= 2");
  }
  const auto D = static_cast<Eigen::Index>(dim + 1);
  const auto m = static_cast<Eigen::Index>(hidden);
  TransformerParams p;
  p.dim = dim;
  p.classes = classes;
  p.hidden = hidden;
  p.query.assign(heads, Eigen::MatrixXd::Zero(D, D));
  p.value.assign(heads, Eigen::MatrixXd::Zero(D, D));
  p.ff_in = Eigen::MatrixXd::Zero(m, D);
  p.ff_out = Eigen::MatrixXd::Zero(D, m);
  p.readout = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes), D);
  p.gamma = {1.0, 1.0, 0.0};
  return p;
}

TransformerParams init_transformer(std::size_t dim, std::size_t classes, std::size_t hidden,
                                   std::size_t heads, Rng& rng) {
  TransformerParams p = zero_transformer(dim, classes, hidden, heads);
  const double scale = 0.1 / std::sqrt(static_cast<double>(dim + 1));
  for_each_matrix(p, [&](Eigen::MatrixXd& m) { fill_uniform(m, scale, rng); });
  return p;
}

void validate(const TransformerParams& p) {
  const std::size_t D = p.dim + 1;
  if (p.dim == 0 || p.classes < 2 || p.hidden == 0 || p.heads() == 0 ||
      p.value.size() != p.heads()) {
    throw std::invalid_argument("TransformerParams: inconsistent sizes");
  }
  for (const auto& m : p.query) check_shape(m, D, D, "query");
  for (const auto& m : p.value) check_shape(m, D, D, "value");
  check_shape(p.ff_in, p.hidden, D, "ff_in");
  check_shape(p.ff_out, D, p.hidden, "ff_out");
  check_shape(p.readout, p.classes, D, "readout");
  for (double g : p.gamma) {
    if (!std::isfinite(g)) throw std::invalid_argument("TransformerParams: non-finite gamma");
  }
  if (p.gamma[1] == 0.0) throw std::invalid_argument("TransformerParams: gamma_2 must be nonzero");
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

TransformerParams random_constrained_transformer(std::size_t dim, std::size_t classes,
                                                 std::size_t hidden, std::size_t heads,
                                                 std::array<double, 3> gamma, double min_norm,
                                                 double max_norm, Rng& rng) {
  if (!(0.0 < min_norm && min_norm <= max_norm)) {
    throw std::invalid_argument("random_constrained_transformer: need 0 < min_norm <= max_norm");
  }
  TransformerParams p = zero_transformer(dim, classes, hidden, heads);
  for_each_matrix(p, [&](Eigen::MatrixXd& m) {
    fill_uniform(m, 1.0, rng);
    const double target = rng.uniform(min_norm, max_norm);
    const double norm = spectral_norm(m);
    if (norm > 0.0) m *= target / norm;
  });
  p.gamma = gamma;
  validate(p);
  return p;
}

std::size_t parameter_count(const TransformerParams& p) {
  std::size_t count = 3;
  for_each_matrix(p, [&](const Eigen::MatrixXd& m) { count += static_cast<std::size_t>(m.size()); });
  return count;
}

std::vector<double> flatten(const TransformerParams& p) {
  std::vector<double> flat;
  flat.reserve(parameter_count(p));
  for_each_matrix(p, [&](const Eigen::MatrixXd& m) {
    flat.insert(flat.end(), m.data(), m.data() + m.size());
  });
  flat.insert(flat.end(), p.gamma.begin(), p.gamma.end());
  return flat;
}

void unflatten(std::span<const double> flat, TransformerParams& p) {
  if (flat.size() != parameter_count(p)) {
    throw std::invalid_argument("unflatten: parameter count mismatch");
  }
  std::size_t offset = 0;
  for_each_matrix(p, [&](Eigen::MatrixXd& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m.size(), m.data());
    offset += static_cast<std::size_t>(m.size());
  });
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), 3, p.gamma.begin());
}

Eigen::VectorXd layer_norm(const Eigen::VectorXd& v, const std::array<double, 3>& gamma) {
  if (gamma[1] == 0.0) throw std::invalid_argument("layer_norm: gamma_2 must be nonzero");
  const Eigen::VectorXd centered = v.array() - v.mean();
  const double denom = centered.norm() + std::abs(gamma[1]);
  return (gamma[0] / denom * centered).array() + gamma[2];
}

Eigen::VectorXd context_token(const Example& example) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(example.features.size() + 1));
  t[0] = static_cast<double>(example.label);
  for (std::size_t i = 0; i < example.features.size(); ++i) {
    t[static_cast<Eigen::Index>(i + 1)] = example.features[i];
  }
  return t;
}

Eigen::VectorXd query_token(std::span<const double> x) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(x.size() + 1));
  t[0] = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) t[static_cast<Eigen::Index>(i + 1)] = x[i];
  return t;
}

AttentionTrace transformer_trace(const TransformerParams& params, std::span<const double> x,
                                 const Dataset& data) {
  check_inputs(params, x, data);
  AttentionTrace tr;
  tr.query_token = query_token(x);
  attend(params, tr.query_token, data, &tr.attention, tr.pooled);
  tr.u_prime = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.dim + 1));
  for (std::size_t h = 0; h < params.heads(); ++h) {
    tr.u_prime += params.value[h] * tr.pooled.col(static_cast<Eigen::Index>(h));
  }
  tr.u = layer_norm(tr.query_token + tr.u_prime, params.gamma);
  tr.hidden_pre = params.ff_in * tr.u;
  tr.z_prime = params.ff_out * tr.hidden_pre.cwiseMax(0.0);
  tr.z = layer_norm(tr.u + tr.z_prime, params.gamma);
  tr.logits = params.readout * tr.z;
  return tr;
}

TransformerOutput transformer_forward(const TransformerParams& params,
                                      std::span<const double> x, const Dataset& data) {
  AttentionTrace tr = transformer_trace(params, x, data);
  ClassDistribution probs = softmax_distribution(tr.logits);
  return {std::move(probs), std::move(tr)};
}

ClassDistribution transformer_predict(const TransformerParams& params,
                                      std::span<const double> x, const Dataset& data) {
  check_inputs(params, x, data);
  const Eigen::VectorXd v = query_token(x);
  Eigen::MatrixXd pooled;
  attend(params, v, data, nullptr, pooled);
  Eigen::VectorXd u_prime = Eigen::VectorXd::Zero(v.size());
  for (std::size_t h = 0; h < params.heads(); ++h) {
    u_prime += params.value[h] * pooled.col(static_cast<Eigen::Index>(h));
  }
  const Eigen::VectorXd u = layer_norm(v + u_prime, params.gamma);
  const Eigen::VectorXd z_prime = params.ff_out * (params.ff_in * u).cwiseMax(0.0);
  const Eigen::VectorXd z = layer_norm(u + z_prime, params.gamma);
  return softmax_distribution(params.readout * z);
}

Predictor make_transformer_predictor(TransformerParams params) {
  validate(params);
  return [params = std::move(params)](std::span<const double> x, const Dataset& data) {
    return transformer_predict(params, x, data);
  };
}

}  // namespace pfnlab
