#pragma once

// Nearest-neighbour probabilities over cosine distances, their fusion, the
// global-class head and the multi-task losses.

#include <cstddef>
#include <string>
#include <vector>

#include "mastaf/attention.hpp"
#include "mastaf/fcube.hpp"
#include "mastaf/ops.hpp"
#include "mastaf/tape.hpp"

namespace mastaf {

struct FusionConfig {
  // Weight of the global-class loss; 0 disables multi-task training.
  double lambda = 2.0;
  std::size_t num_global_classes = 1;
  // Average-pool the cube to C' before the affine head (else flatten C'*L).
  bool global_pool = true;

  void validate() const;
  Shape weight_shape(const CubeDims& dims) const;
};

template <typename T>
Var<T> cosine_distance(const Var<T>& a, const Var<T>& b) {
  return ops::cosine_distance(a, b);
}

// softmax_k(-D_cos(query, class_k)) at temperature 1.
template <typename T>
Var<T> class_probabilities(const Var<T>& query, const std::vector<Var<T>>& classes) {
  if (classes.size() < 2) throw ConfigError("class probabilities need at least 2 classes");
  std::vector<Var<T>> dists;
  dists.reserve(classes.size());
  for (const auto& c : classes) dists.push_back(cosine_distance(query, c));
  return ops::softmax(ops::neg(ops::stack(dists)), T(1));
}

template <typename T>
Var<T> p_self(const Var<T>& query_self, const std::vector<Var<T>>& class_selfs) {
  return class_probabilities(query_self, class_selfs);
}

// Each class contributes its own query-side representation.
template <typename T>
Var<T> p_cross(const std::vector<CrossPair<T>>& pairs) {
  if (pairs.size() < 2) throw ConfigError("p_cross needs at least 2 classes");
  std::vector<Var<T>> dists;
  dists.reserve(pairs.size());
  for (const auto& p : pairs) dists.push_back(cosine_distance(p.query_rep, p.class_rep));
  return ops::softmax(ops::neg(ops::stack(dists)), T(1));
}

// (p_self + p_cross) / 2
template <typename T>
Var<T> fuse(const Var<T>& p_self_v, const Var<T>& p_cross_v) {
  if (p_self_v.numel() != p_cross_v.numel()) {
    throw DimensionError("fuse: probability vectors of length " +
                         std::to_string(p_self_v.numel()) + " and " +
                         std::to_string(p_cross_v.numel()));
  }
  return ops::scale(ops::add(p_self_v, p_cross_v), T(0.5));
}

// Global-class logits [Z] for one cross-attended class representation.
template <typename T>
Var<T> global_logits(const Var<T>& cross_rep, const Var<T>& weight, const Var<T>& bias,
                     bool pool) {
  const auto d = CubeDims::from_shape(cross_rep.shape());
  Var<T> features;
  if (pool) {
    features = ops::row_mean(flatten_positions(cross_rep));
  } else {
    features = ops::reshape(cross_rep, Shape{d.numel()});
  }
  if (weight.shape().rank() != 2 || weight.shape()[0] != features.numel()) {
    throw DimensionError("global_logits: weight " + weight.shape().to_string() + " for " +
                         std::to_string(features.numel()) + " input features");
  }
  return ops::linear(features, weight, bias);
}

// -log P(true class), floored at 1e-12.
template <typename T>
Var<T> loss_nn(const Var<T>& p_fused, std::size_t true_class) {
  return ops::neg_log_prob(p_fused, true_class);
}

// Mean softmax cross-entropy over the per-prototype logits.
template <typename T>
Var<T> loss_global(const std::vector<Var<T>>& logits, const std::vector<std::size_t>& labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw DimensionError("loss_global: " + std::to_string(logits.size()) + " logit vectors, " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<Var<T>> terms;
  terms.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    terms.push_back(ops::cross_entropy(logits[i], labels[i]));
  }
  return ops::mean_of(terms);
}

// L1 + lambda * L2
template <typename T>
Var<T> total_loss(const Var<T>& l1, const Var<T>& l2, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("total_loss: lambda must be >= 0");
  return ops::add(l1, ops::scale(l2, static_cast<T>(lambda)));
}

}  // namespace mastaf
