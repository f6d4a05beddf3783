#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pfnlab/core.hpp"
#include "pfnlab/rng.hpp"

namespace pfnlab {

/// The context passed to transformer_forward was empty.
class EmptyContext : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weights of the one-layer, H-head transformer PFN. With D = d + 1:
///   query[h], value[h]   D x D    attention similarity and value maps
///   ff_in                m x D    first feed-forward layer
///   ff_out               D x m    second feed-forward layer
///   readout              C x D    output logits
///   gamma                (scale, offset in the denominator, shift), shared by
///                        both LayerNorms; gamma[1] must be nonzero.
struct TransformerParams {
  std::size_t dim = 0;
  std::size_t classes = 2;
  std::size_t hidden = 0;
  std::vector<Eigen::MatrixXd> query;
  std::vector<Eigen::MatrixXd> value;
  Eigen::MatrixXd ff_in;
  Eigen::MatrixXd ff_out;
  Eigen::MatrixXd readout;
  std::array<double, 3> gamma{1.0, 1.0, 0.0};

  std::size_t heads() const { return query.size(); }
  std::size_t token_dim() const { return dim + 1; }
};

/// All parameters zero except gamma = (1, 1, 0).
TransformerParams zero_transformer(std::size_t dim, std::size_t classes, std::size_t hidden,
                                   std::size_t heads);

/// Entries iid uniform on [-0.1, 0.1] / sqrt(d + 1); gamma = (1, 1, 0).
TransformerParams init_transformer(std::size_t dim, std::size_t classes, std::size_t hidden,
                                   std::size_t heads, Rng& rng);

/// Shape and finiteness checks; throws std::invalid_argument.
void validate(const TransformerParams& params);

/// Largest singular value.
double spectral_norm(const Eigen::MatrixXd& m);

/// Random weights with every matrix rescaled to a spectral norm drawn
/// uniformly from [min_norm, max_norm] (max_norm <= 1 keeps the bounded
/// difference analysis applicable).
TransformerParams random_constrained_transformer(std::size_t dim, std::size_t classes,
                                                 std::size_t hidden, std::size_t heads,
                                                 std::array<double, 3> gamma, double min_norm,
                                                 double max_norm, Rng& rng);

std::size_t parameter_count(const TransformerParams& params);
/// Fixed order: query[0..H), value[0..H), ff_in, ff_out, readout (each
/// column-major), then gamma.
std::vector<double> flatten(const TransformerParams& params);
void unflatten(std::span<const double> flat, TransformerParams& params);

/// gamma_1 (v - avg(v)) / (||v - avg(v)|| + |gamma_2|) + gamma_3.
Eigen::VectorXd layer_norm(const Eigen::VectorXd& v, const std::array<double, 3>& gamma);

/// Intermediate quantities of one forward pass. attention is H x n with rows
/// summing to one; pooled.col(h) = sum_j a_j^(h) V_j.
struct AttentionTrace {
  Eigen::MatrixXd attention;
  Eigen::MatrixXd pooled;
  Eigen::VectorXd query_token;
  Eigen::VectorXd u_prime;
  Eigen::VectorXd u;
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd z_prime;
  Eigen::VectorXd z;
  Eigen::VectorXd logits;
};

struct TransformerOutput {
  ClassDistribution probs;
  AttentionTrace trace;
};

/// Token of a context example: (Y, X) with the label index as a number.
Eigen::VectorXd context_token(const Example& example);
/// Test token (0, x).
Eigen::VectorXd query_token(std::span<const double> x);

/// Forward pass over context tokens V_j = (Y_j, X_j) and test token
/// v = (0, x):
///   a^(h) = SoftMax_j(v' Wq^(h) V_j)
///   u'    = sum_h sum_j a_j^(h) Wv^(h) V_j
///   u     = LayerNorm(v + u')
///   z'    = W_r2 ReLU(W_r1 u)
///   z     = LayerNorm(u + z')
///   q     = SoftMax(W_o z)
/// Sums over j run in ascending index order. Throws EmptyContext for n = 0.
TransformerOutput transformer_forward(const TransformerParams& params,
                                      std::span<const double> x, const Dataset& data);

/// The trace of transformer_forward without building the output distribution;
/// non-finite parameters propagate into the logits instead of raising.
AttentionTrace transformer_trace(const TransformerParams& params, std::span<const double> x,
                                 const Dataset& data);

/// Same as transformer_forward but returns only the class distribution and
/// skips building the trace.
ClassDistribution transformer_predict(const TransformerParams& params,
                                      std::span<const double> x, const Dataset& data);

Predictor make_transformer_predictor(TransformerParams params);

}  // namespace pfnlab
