#pragma once

// C-way K-shot episode sampling.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mastaf/embedding.hpp"
#include "mastaf/manifest.hpp"

namespace mastaf {

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 1;

  // Throws ConfigError unless ways >= 2, shots >= 1, queries >= 1.
  void validate() const;
};

// Pointers refer into the Dataset the episode was drawn from.
struct Episode {
  // support[c][k]
  std::vector<std::vector<const VideoSample*>> support;
  std::vector<const VideoSample*> queries;
  // Episode-local class of each query.
  std::vector<std::size_t> query_labels;
  // Episode-local class -> manifest class id.
  std::vector<int> class_ids;
  // Episode-local class -> position of the class in its dataset.
  std::vector<std::size_t> class_positions;

  std::size_t ways() const noexcept { return support.size(); }
};

// Classes uniform without replacement; K support samples per class without
// replacement; queries from the same classes, disjoint from the support.
Episode sample_episode(const Dataset& dataset, const EpisodeSpec& spec, std::mt19937_64& rng);

// SplitMix64 mixing, used to derive independent per-episode seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace mastaf
