#pragma once

// Self- and cross-attention over feature cubes.
//
// For a cube reshaped to R' [C', L] and a relation map M [L, L]:
//   m_bar = row_mean(M)
//   d     = f_gamma(relu(f_delta(m_bar)))         (meta-learner kernel, [L])
//   s_i   = d . M[:, i]                           (column i of M)
//   A     = softmax(s / tau)                      (reshaped to [T', H', W'])
//   out   = R * (1 + A)                           (per-position residual scaling)

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mastaf/fcube.hpp"
#include "mastaf/ops.hpp"
#include "mastaf/tape.hpp"

namespace mastaf {

struct AttentionConfig {
  double tau = 0.025;
  std::size_t meta_dim = 6;
  // Affine f_delta / f_gamma (true) or bias-free linear maps.
  bool bias = true;
  // Learn d with the meta-learner; when off, d is all ones.
  bool meta_learner = true;
  // Scale by (1 + A); when off, by A alone.
  bool residual = true;

  // Throws ConfigError unless tau > 0 and 1 <= meta_dim < positions.
  void validate(std::size_t positions) const;
};

// Leaves of one attention module. Members are invalid Vars when the config
// disables them (biases, or the whole meta-learner).
template <typename T>
struct AttentionVars {
  Var<T> w_delta;  // [L, l]
  Var<T> b_delta;  // [l]
  Var<T> w_gamma;  // [l, L]
  Var<T> b_gamma;  // [L]
};

struct AttentionParamShape {
  std::string name;
  Shape shape;
};

// Tensors of one attention module under `prefix`, in binding order.
std::vector<AttentionParamShape> attention_parameter_shapes(const std::string& prefix,
                                                            const AttentionConfig& cfg,
                                                            std::size_t positions);

// Uniform(-1/sqrt(L), 1/sqrt(L)) weights, zero biases.
std::vector<std::vector<float>> init_attention_params(const AttentionConfig& cfg,
                                                      std::size_t positions, std::mt19937_64& rng);

// Per-module MACs for one attended cube.
std::uint64_t attention_macs(const CubeDims& dims, const AttentionConfig& cfg);

template <typename T>
struct CrossPair {
  Var<T> query_rep;  // query re-weighted by attention from M(q <- c)
  Var<T> class_rep;  // prototype re-weighted by attention from M(c <- q)
};

// [C', T', H', W'] -> [C', L]; column j is the channel vector of position j.
template <typename T>
Var<T> flatten_positions(const Var<T>& cube) {
  const auto d = CubeDims::from_shape(cube.shape());
  return ops::reshape(cube, Shape{d.channels, d.positions()});
}

template <typename T>
Var<T> unflatten_positions(const Var<T>& mat, const CubeDims& dims) {
  return ops::reshape(mat, dims.shape());
}

// a^T b for a, b in [C', L]. With a == b this is the self-relation map; with
// (support, query) it is M(q <- c), with (query, support) M(c <- q).
template <typename T>
Var<T> relation_map(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError("relation_map: shape mismatch " + a.shape().to_string() + " vs " +
                         b.shape().to_string());
  }
  return ops::matmul_tn(a, b);
}

// Spatio-temporal attention map [T', H', W'] from a relation map [L, L].
template <typename T>
Var<T> attention_weights(const Var<T>& relation, const AttentionVars<T>& vars,
                         const AttentionConfig& cfg, const Shape& positions) {
  const std::size_t L = positions.numel();
  if (relation.shape().rank() != 2 || relation.shape()[0] != L || relation.shape()[1] != L) {
    throw DimensionError("attention_weights: relation map " + relation.shape().to_string() +
                         " does not match " + std::to_string(L) + " positions " +
                         positions.to_string());
  }
  cfg.validate(L);
  Var<T> kernel;
  if (cfg.meta_learner) {
    auto pooled = ops::row_mean(relation);
    auto hidden = ops::relu(ops::linear(pooled, vars.w_delta, vars.b_delta));
    kernel = ops::linear(hidden, vars.w_gamma, vars.b_gamma);
  } else {
    kernel = relation.tape().constant(Shape{L}, std::vector<T>(L, T(1)));
  }
  auto scores = ops::matmul(ops::reshape(kernel, Shape{1, L}), relation);
  auto attn = ops::softmax(scores, static_cast<T>(cfg.tau));
  return ops::reshape(attn, positions);
}

// cube * (1 + A), A broadcast over channels.
template <typename T>
Var<T> apply_residual(const Var<T>& cube, const Var<T>& attn, bool residual = true) {
  const auto d = CubeDims::from_shape(cube.shape());
  if (!(attn.shape() == d.position_shape())) {
    throw DimensionError("apply_residual: attention " + attn.shape().to_string() +
                         " does not match cube positions " + d.position_shape().to_string());
  }
  auto weights = residual ? ops::add_scalar(attn, T(1)) : attn;
  return ops::broadcast_mul(cube, weights);
}

template <typename T>
Var<T> self_attend(const Var<T>& cube, const AttentionVars<T>& vars, const AttentionConfig& cfg) {
  const auto d = CubeDims::from_shape(cube.shape());
  auto flat = flatten_positions(cube);
  auto relation = relation_map(flat, flat);
  auto attn = attention_weights(relation, vars, cfg, d.position_shape());
  return apply_residual(cube, attn, cfg.residual);
}

// Cross-attention between a query cube and a class prototype. `query_side`
// weighs M(q <- c); `class_side` weighs M(c <- q). Pass the same vars twice to
// share them across directions.
template <typename T>
CrossPair<T> cross_attend(const Var<T>& query, const Var<T>& proto,
                          const AttentionVars<T>& query_side, const AttentionVars<T>& class_side,
                          const AttentionConfig& cfg) {
  if (!(query.shape() == proto.shape())) {
    throw DimensionError("cross_attend: query " + query.shape().to_string() + " vs prototype " +
                         proto.shape().to_string());
  }
  const auto d = CubeDims::from_shape(query.shape());
  auto q = flatten_positions(query);
  auto c = flatten_positions(proto);
  auto m_query = relation_map(c, q);  // (R'_c)^T R'_q
  auto m_class = relation_map(q, c);  // (R'_q)^T R'_c
  auto a_query = attention_weights(m_query, query_side, cfg, d.position_shape());
  auto a_class = attention_weights(m_class, class_side, cfg, d.position_shape());
  return CrossPair<T>{apply_residual(query, a_query, cfg.residual),
                      apply_residual(proto, a_class, cfg.residual)};
}

}  // namespace mastaf
