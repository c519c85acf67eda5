#pragma once

// The full episode forward pass: embed, prototype, attend, score, and the
// multi-task losses, for each ablation variant.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mastaf/attention.hpp"
#include "mastaf/embedding.hpp"
#include "mastaf/episodes.hpp"
#include "mastaf/fusion.hpp"
#include "mastaf/params.hpp"

namespace mastaf {

enum class Variant { kFull, kNeighbor, kSelfOnly, kCrossOnly };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

inline bool uses_self(Variant v) { return v == Variant::kFull || v == Variant::kSelfOnly; }
inline bool uses_cross(Variant v) { return v == Variant::kFull || v == Variant::kCrossOnly; }

struct ModelConfig {
  EmbedderSpec embedder;
  AttentionConfig attention;
  // One set of cross-attention weights for both directions (else one per direction).
  bool share_cross_directions = true;
  FusionConfig fusion;
  Variant variant = Variant::kFull;

  const CubeDims& cube() const noexcept { return embedder.output; }
  void validate() const;
  // Whether the global-class loss contributes: needs cross representations and lambda > 0.
  bool global_loss_active() const { return uses_cross(variant) && fusion.lambda > 0.0; }
};

// Parameter layout for a config: embedder tensors, "self.*", "cross.*" (or
// "cross_query.*" and "cross_class.*"), "global.weight", "global.bias". Every
// variant carries the full set so checkpoints are interchangeable.
ParamSet init_parameters(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct ModelVars {
  std::vector<Var<T>> embedder;
  AttentionVars<T> self;
  AttentionVars<T> cross_query;
  AttentionVars<T> cross_class;
  Var<T> global_weight;
  Var<T> global_bias;
  // One leaf per parameter, in ParamSet order.
  std::vector<Var<T>> leaves;
};

template <typename T>
ModelVars<T> bind_parameters(Tape<T>& tape, const ParamSetT<T>& params) {
  ModelVars<T> mv;
  for (const auto& p : params) {
    auto v = tape.leaf(p.shape, p.value);
    mv.leaves.push_back(v);
    const std::string& n = p.name;
    auto assign = [&](AttentionVars<T>& a, const std::string& prefix) {
      if (n == prefix + ".w_delta") a.w_delta = v;
      if (n == prefix + ".b_delta") a.b_delta = v;
      if (n == prefix + ".w_gamma") a.w_gamma = v;
      if (n == prefix + ".b_gamma") a.b_gamma = v;
    };
    if (n.rfind("embedder.", 0) == 0) mv.embedder.push_back(v);
    assign(mv.self, "self");
    assign(mv.cross_query, "cross");
    assign(mv.cross_class, "cross");
    assign(mv.cross_query, "cross_query");
    assign(mv.cross_class, "cross_class");
    if (n == "global.weight") mv.global_weight = v;
    if (n == "global.bias") mv.global_bias = v;
  }
  return mv;
}

// Scores for one query. Vectors are empty for branches the variant skips;
// `probs` is the variant's final distribution.
template <typename T>
struct EpisodeScores {
  std::vector<T> p_self;
  std::vector<T> p_cross;
  std::vector<T> p_fused;
  std::size_t prediction = 0;
};

template <typename T>
struct EpisodeOutput {
  std::vector<EpisodeScores<T>> queries;
  Var<T> loss_nn;
  Var<T> loss_global;  // invalid when the global loss is inactive
  Var<T> loss_total;

  T loss_global_value() const { return loss_global.valid() ? loss_global.item() : T(0); }
};

namespace detail {

template <typename T>
std::vector<T> to_vector(const Var<T>& v) {
  return std::vector<T>(v.value().begin(), v.value().end());
}

template <typename T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace detail

// `global_labels` holds the global class (head output index) of each episode
// class; pass an empty vector to skip the global loss (evaluation).
template <typename T>
EpisodeOutput<T> forward_episode(Tape<T>& tape, const ModelConfig& config,
                                 const ModelVars<T>& vars, const Episode& episode,
                                 const std::vector<std::size_t>& global_labels) {
  const std::size_t ways = episode.ways();
  const Variant variant = config.variant;

  std::vector<Var<T>> protos;
  std::vector<Var<T>> queries;
  {
    StageScope<T> stage(tape, Stage::kEmbed);
    for (const auto& shots : episode.support) {
      std::vector<Var<T>> cubes;
      for (const auto* s : shots) cubes.push_back(embed(tape, config.embedder, vars.embedder, *s));
      protos.push_back(prototype(cubes));
    }
    for (const auto* q : episode.queries) {
      queries.push_back(embed(tape, config.embedder, vars.embedder, *q));
    }
  }

  std::vector<Var<T>> proto_selfs;
  if (uses_self(variant)) {
    StageScope<T> stage(tape, Stage::kSelfAttention);
    for (const auto& p : protos) proto_selfs.push_back(self_attend(p, vars.self, config.attention));
  }

  const bool with_global = !global_labels.empty() && config.global_loss_active();
  if (with_global && global_labels.size() != ways) {
    throw DimensionError("forward_episode: " + std::to_string(global_labels.size()) +
                         " global labels for " + std::to_string(ways) + " classes");
  }

  EpisodeOutput<T> out;
  std::vector<Var<T>> nn_terms;
  std::vector<Var<T>> global_terms;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& query = queries[qi];
    EpisodeScores<T> scores;
    Var<T> probs;

    if (variant == Variant::kNeighbor) {
      StageScope<T> stage(tape, Stage::kFusion);
      probs = class_probabilities(query, protos);
    }

    Var<T> ps;
    if (uses_self(variant)) {
      Var<T> query_self;
      {
        StageScope<T> stage(tape, Stage::kSelfAttention);
        query_self = self_attend(query, vars.self, config.attention);
      }
      StageScope<T> stage(tape, Stage::kFusion);
      ps = p_self(query_self, proto_selfs);
      scores.p_self = detail::to_vector(ps);
    }

    Var<T> pc;
    std::vector<CrossPair<T>> pairs;
    if (uses_cross(variant)) {
      {
        StageScope<T> stage(tape, Stage::kCrossAttention);
        for (const auto& p : protos) {
          pairs.push_back(
              cross_attend(query, p, vars.cross_query, vars.cross_class, config.attention));
        }
      }
      StageScope<T> stage(tape, Stage::kFusion);
      pc = p_cross(pairs);
      scores.p_cross = detail::to_vector(pc);
    }

    if (variant == Variant::kFull) {
      StageScope<T> stage(tape, Stage::kFusion);
      probs = fuse(ps, pc);
    } else if (variant == Variant::kSelfOnly) {
      probs = ps;
    } else if (variant == Variant::kCrossOnly) {
      probs = pc;
    }
    scores.p_fused = detail::to_vector(probs);
    scores.prediction = detail::argmax<T>(probs.value());

    if (with_global) {
      std::vector<Var<T>> logits;
      {
        StageScope<T> stage(tape, Stage::kFusion);
        for (const auto& pair : pairs) {
          logits.push_back(global_logits(pair.class_rep, vars.global_weight, vars.global_bias,
                                         config.fusion.global_pool));
        }
      }
      global_terms.push_back(loss_global(logits, global_labels));
    }
    nn_terms.push_back(loss_nn(probs, episode.query_labels.at(qi)));
    out.queries.push_back(std::move(scores));
  }

  out.loss_nn = ops::mean_of(nn_terms);
  if (with_global) {
    out.loss_global = ops::mean_of(global_terms);
    out.loss_total = total_loss(out.loss_nn, out.loss_global, config.fusion.lambda);
  } else {
    out.loss_total = out.loss_nn;
  }
  return out;
}

}  // namespace mastaf
