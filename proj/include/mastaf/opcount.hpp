#pragma once

// Forward-pass multiply-accumulate counts per stage, in closed form and as
// measured by the graph's instrumentation.

#include <cstdint>
#include <string>

#include "mastaf/episodes.hpp"
#include "mastaf/model.hpp"

namespace mastaf {

struct OpCountReport {
  CubeDims dims;
  std::size_t ways = 0;
  std::size_t shots = 0;
  std::size_t queries = 0;
  Variant variant = Variant::kFull;
  bool training_head = false;

  std::uint64_t embed = 0;
  std::uint64_t self_attention = 0;
  std::uint64_t cross_attention = 0;
  std::uint64_t fusion = 0;
  // Cost of attending one cube (either module).
  std::uint64_t attention_per_cube = 0;

  std::uint64_t total() const { return embed + self_attention + cross_attention + fusion; }
  bool same_counts(const OpCountReport& o) const {
    return embed == o.embed && self_attention == o.self_attention &&
           cross_attention == o.cross_attention && fusion == o.fusion;
  }
};

// Closed form. `training_head` adds the global classifier of the multi-task loss.
OpCountReport count_ops(const ModelConfig& config, const EpisodeSpec& spec, bool training_head);

// Runs one forward pass on random inputs and reads the per-stage MAC counters.
OpCountReport instrumented_ops(const ModelConfig& config, const EpisodeSpec& spec,
                               bool training_head, std::uint64_t seed);

}  // namespace mastaf
