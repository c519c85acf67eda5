#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mastaf/episodes.hpp"
#include "mastaf/model.hpp"

namespace testing_helpers {

inline std::vector<float> normal_values(std::size_t n, std::mt19937_64& rng, float sd = 1.0f) {
  std::normal_distribution<float> d(0.0f, sd);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline mastaf::VideoSample cube_sample(const mastaf::CubeDims& dims, std::vector<float> values,
                                       int cls = -1, std::string id = "s") {
  mastaf::VideoSample s;
  s.id = std::move(id);
  s.class_id = cls;
  s.global_class_id = cls;
  s.payload = mastaf::FeatureCube(dims, std::move(values));
  return s;
}

// Owns the samples an Episode points into.
struct OwnedEpisode {
  std::vector<std::vector<mastaf::VideoSample>> support;
  std::vector<mastaf::VideoSample> queries;
  mastaf::Episode episode;

  void link() {
    episode = {};
    for (std::size_t c = 0; c < support.size(); ++c) {
      std::vector<const mastaf::VideoSample*> shots;
      for (const auto& s : support[c]) shots.push_back(&s);
      episode.support.push_back(shots);
      episode.class_ids.push_back(static_cast<int>(c));
      episode.class_positions.push_back(c);
    }
    for (const auto& q : queries) {
      episode.queries.push_back(&q);
      episode.query_labels.push_back(static_cast<std::size_t>(q.class_id));
    }
  }
};

inline OwnedEpisode random_episode(const mastaf::CubeDims& dims, std::size_t ways,
                                   std::size_t shots, std::size_t queries, std::mt19937_64& rng,
                                   float sd = 1.0f) {
  OwnedEpisode e;
  e.support.resize(ways);
  for (std::size_t c = 0; c < ways; ++c) {
    for (std::size_t k = 0; k < shots; ++k) {
      e.support[c].push_back(
          cube_sample(dims, normal_values(dims.numel(), rng, sd), static_cast<int>(c)));
    }
  }
  for (std::size_t q = 0; q < queries; ++q) {
    e.queries.push_back(
        cube_sample(dims, normal_values(dims.numel(), rng, sd), static_cast<int>(q % ways)));
  }
  e.link();
  return e;
}

inline mastaf::ModelConfig cube_model(const mastaf::CubeDims& dims, std::size_t meta_dim = 6,
                                      std::size_t global_classes = 20) {
  mastaf::ModelConfig m;
  m.embedder = mastaf::EmbedderSpec::precomputed(dims);
  m.attention.meta_dim = meta_dim;
  m.fusion.num_global_classes = global_classes;
  return m;
}

// Adds N(0, sd) to every parameter, so biases are not all zero.
template <typename T>
void jitter(mastaf::ParamSetT<T>& params, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto& v : params[i].value) v += static_cast<T>(d(rng));
  }
}

template <typename T>
std::vector<mastaf::EpisodeScores<T>> scores_of(const mastaf::ModelConfig& cfg,
                                                const mastaf::ParamSetT<T>& params,
                                                const mastaf::Episode& episode) {
  mastaf::Tape<T> tape;
  const auto vars = mastaf::bind_parameters(tape, params);
  return mastaf::forward_episode(tape, cfg, vars, episode, {}).queries;
}

}  // namespace testing_helpers
