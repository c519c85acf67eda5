#pragma once

// Episodic training with plain SGD, frozen-parameter evaluation, and the
// per-episode driver both share.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mastaf/episodes.hpp"
#include "mastaf/manifest.hpp"
#include "mastaf/model.hpp"
#include "mastaf/params.hpp"

namespace mastaf {

struct TrainConfig {
  EpisodeSpec episode;
  // Optimizer steps; each averages the loss over `batch_episodes` episodes.
  std::size_t steps = 5000;
  std::size_t batch_episodes = 4;
  double learning_rate = 0.01;
  double momentum = 0.0;
  ModelConfig model;
  std::uint64_t seed = 42;
  // Write a checkpoint every N steps (0: final checkpoint only).
  std::size_t checkpoint_every = 0;
  int workers = 1;

  // Validates and applies consistency rules; returns warnings for the caller
  // to report (e.g. lambda without cross-attention is forced to 0).
  std::vector<std::string> normalize();
};

// Result of one episode under fixed parameters.
struct EpisodeRun {
  std::vector<EpisodeScores<float>> scores;
  std::vector<std::size_t> labels;
  double loss_total = 0.0;
  double loss_nn = 0.0;
  double loss_global = 0.0;
  std::size_t clamped_logs = 0;
  // Filled when gradients were requested; laid out like the ParamSet.
  GradSet grads;

  std::size_t correct() const;
};

// Forward pass (and backward when `with_grads`). The global loss is included
// when `global_labels` is non-empty and the config activates it.
EpisodeRun run_episode(const Episode& episode, const ParamSet& params, const ModelConfig& config,
                       const std::vector<std::size_t>& global_labels, bool with_grads);

struct LossRecord {
  std::size_t step = 0;
  double loss_total = 0.0;
  double loss_nn = 0.0;
  double loss_global = 0.0;
};

struct TrainResult {
  ParameterStore store;
  std::vector<LossRecord> trace;
  std::filesystem::path checkpoint;
  std::filesystem::path trace_path;
  std::size_t clamped_logs = 0;
};

// Trains from `initial` (or a fresh init from config.seed when null). With a
// non-empty out_dir, writes loss_trace.csv, periodic step_N.ckpt and final.ckpt.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const std::filesystem::path& out_dir = {}, const ParamSet* initial = nullptr);

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace);

struct VariantAccuracy {
  Variant variant = Variant::kFull;
  double accuracy = 0.0;
  double ci95 = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalReport {
  Variant variant = Variant::kFull;
  double accuracy = 0.0;
  // Half-width of the normal-approximation 95% interval of a Bernoulli mean.
  double ci95 = 0.0;
  std::size_t episodes = 0;
  std::size_t queries_per_episode = 1;
  std::vector<VariantAccuracy> per_variant;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::size_t clamped_logs = 0;

  std::string to_json() const;
};

double ci95_half_width(double accuracy, std::size_t n);

// Evaluates config.variant plus any extra `variants` on the same episodes.
EvalReport evaluate(const ModelConfig& config, const ParamSet& params, const Dataset& dataset,
                    const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed,
                    int workers = 1, const std::vector<Variant>& variants = {});

// Loads a checkpoint and evaluates it; CheckpointError if its cube dims do not
// match the dataset.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& dataset,
                               const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed,
                               int workers = 1, const std::vector<Variant>& variants = {});

}  // namespace mastaf
