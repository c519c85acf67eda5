#include "mastaf/trainer.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>
#include <json.hpp>
#include <omp.h>

#include "mastaf/checkpoint.hpp"
#include "mastaf/log.hpp"

namespace mastaf {
namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1;

int clamp_workers(int workers) { return workers < 1 ? 1 : workers; }

}  // namespace

std::vector<std::string> TrainConfig::normalize() {
  std::vector<std::string> warnings;
  episode.validate();
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a finite value >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (steps < 1) throw ConfigError("training needs at least one step");
  if (batch_episodes < 1) throw ConfigError("batch-episodes must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!uses_cross(model.variant) && model.fusion.lambda > 0.0) {
    warnings.push_back(fmt::format(
        "lambda={} is inert for variant '{}' (no cross-attention representations); using 0",
        model.fusion.lambda, variant_name(model.variant)));
    model.fusion.lambda = 0.0;
  }
  model.validate();
  return warnings;
}

std::size_t EpisodeRun::correct() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) n += scores[i].prediction == labels[i];
  return n;
}

EpisodeRun run_episode(const Episode& episode, const ParamSet& params, const ModelConfig& config,
                       const std::vector<std::size_t>& global_labels, bool with_grads) {
  Tape<float> tape;
  const auto vars = bind_parameters(tape, params);
  auto out = forward_episode(tape, config, vars, episode, global_labels);

  EpisodeRun run;
  run.scores = std::move(out.queries);
  run.labels = episode.query_labels;
  run.loss_total = out.loss_total.item();
  run.loss_nn = out.loss_nn.item();
  run.loss_global = out.loss_global_value();
  if (with_grads) {
    if (out.loss_total.requires_grad()) tape.backward(out.loss_total);
    for (const auto& leaf : vars.leaves) {
      auto g = leaf.grad();
      run.grads.emplace_back(g.begin(), g.end());
      run.grads.back().resize(leaf.numel(), 0.0f);
    }
  }
  run.clamped_logs = tape.clamped_logs();
  return run;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write loss trace " + path.string());
  f << "step,loss_total,loss_nn,loss_global\n";
  for (const auto& r : trace) {
    f << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", r.step, r.loss_total, r.loss_nn, r.loss_global);
  }
  if (!f) throw IoError("write failed: " + path.string());
}

TrainResult train(const TrainConfig& raw_config, const Dataset& train_set,
                  const std::filesystem::path& out_dir, const ParamSet* initial) {
  TrainConfig config = raw_config;
  for (const auto& w : config.normalize()) log::warn("{}", w);
  if (config.model.fusion.num_global_classes != train_set.num_classes()) {
    throw ConfigError(fmt::format("global head has {} classes but the training split has {}",
                                  config.model.fusion.num_global_classes, train_set.num_classes()));
  }
  if (!(train_set.manifest.dims == config.model.cube()) &&
      config.model.embedder.kind == EmbedderSpec::Kind::kPrecomputed) {
    throw ConfigError("training cubes " + train_set.manifest.dims.shape().to_string() +
                      " do not match the model cube " + config.model.cube().shape().to_string());
  }

  ParamSet init = initial ? *initial : init_parameters(config.model, mix_seed(config.seed, 0x1417));
  if (initial && !init.same_layout(init_parameters(config.model, 0))) {
    throw CheckpointError("initial parameters do not match the model config");
  }
  TrainResult result{ParameterStore(std::move(init)), {}, {}, {}, 0};
  auto& store = result.store;

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }

  const std::size_t batch = config.batch_episodes;
  const int workers = clamp_workers(config.workers);
  std::vector<EpisodeRun> runs(batch);
  std::vector<std::uint64_t> seeds(batch);
  const float inv_batch = 1.0f / static_cast<float>(batch);

  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) seeds[b] = mix_seed(config.seed, step + 1, b + 1);
    const auto& params = store.params();

    std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(workers)
    for (long bi = 0; bi < static_cast<long>(batch); ++bi) {
      const auto b = static_cast<std::size_t>(bi);
      try {
        std::mt19937_64 rng(seeds[b]);
        const Episode ep = sample_episode(train_set, config.episode, rng);
        runs[b] = run_episode(ep, params, config.model, ep.class_positions, true);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    LossRecord rec{step, 0.0, 0.0, 0.0};
    store.zero_grad();
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& r = runs[b];
      if (!std::isfinite(r.loss_total)) {
        throw TrainingAborted(fmt::format("non-finite loss at step {} (episode seed {:#x})", step,
                                          seeds[b]),
                              static_cast<long>(step), seeds[b]);
      }
      store.accumulate(r.grads, inv_batch);
      rec.loss_total += r.loss_total / static_cast<double>(batch);
      rec.loss_nn += r.loss_nn / static_cast<double>(batch);
      rec.loss_global += r.loss_global / static_cast<double>(batch);
      result.clamped_logs += r.clamped_logs;
    }
    store.sgd_step(static_cast<float>(config.learning_rate), static_cast<float>(config.momentum));
    result.trace.push_back(rec);

    if (!out_dir.empty() && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < config.steps) {
      save_checkpoint(out_dir / fmt::format("step_{}.ckpt", step + 1), config.model, store.params(),
                      store.version());
    }
    if ((step + 1) % 500 == 0) {
      log::debug("step {} loss {:.5f}", step + 1, rec.loss_total);
    }
  }
  if (result.clamped_logs > 0) {
    log::warn("{} probabilities were floored at 1e-12 inside a logarithm", result.clamped_logs);
  }
  if (!out_dir.empty()) {
    result.checkpoint = out_dir / "final.ckpt";
    save_checkpoint(result.checkpoint, config.model, store.params(), store.version());
    result.trace_path = out_dir / "loss_trace.csv";
    write_loss_trace(result.trace_path, result.trace);
  }
  return result;
}

double ci95_half_width(double accuracy, std::size_t n) {
  if (n == 0) return 0.0;
  return 1.96 * std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(n));
}

EvalReport evaluate(const ModelConfig& config, const ParamSet& params, const Dataset& dataset,
                    const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed, int workers,
                    const std::vector<Variant>& variants) {
  spec.validate();
  config.validate();
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (!params.same_layout(init_parameters(config, 0))) {
    throw CheckpointError("parameters do not match the model config");
  }
  std::vector<Variant> all{config.variant};
  for (Variant v : variants) {
    if (std::find(all.begin(), all.end(), v) == all.end()) all.push_back(v);
  }

  const int nworkers = clamp_workers(workers);
  std::vector<std::vector<std::size_t>> correct(all.size(), std::vector<std::size_t>(episodes, 0));
  std::vector<std::size_t> clamped(episodes, 0);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static) num_threads(nworkers)
  for (long ei = 0; ei < static_cast<long>(episodes); ++ei) {
    const auto e = static_cast<std::size_t>(ei);
    try {
      std::mt19937_64 rng(mix_seed(seed, kEvalStream, e));
      const Episode ep = sample_episode(dataset, spec, rng);
      for (std::size_t vi = 0; vi < all.size(); ++vi) {
        ModelConfig cfg = config;
        cfg.variant = all[vi];
        const auto run = run_episode(ep, params, cfg, {}, false);
        correct[vi][e] = run.correct();
        clamped[e] += run.clamped_logs;
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  report.variant = config.variant;
  report.episodes = episodes;
  report.queries_per_episode = spec.queries;
  report.seed = seed;
  report.config_fingerprint = config_fingerprint(config);
  const std::size_t total = episodes * spec.queries;
  for (std::size_t vi = 0; vi < all.size(); ++vi) {
    VariantAccuracy va;
    va.variant = all[vi];
    for (std::size_t c : correct[vi]) va.correct += c;
    va.total = total;
    va.accuracy = static_cast<double>(va.correct) / static_cast<double>(total);
    va.ci95 = ci95_half_width(va.accuracy, total);
    report.per_variant.push_back(va);
  }
  for (std::size_t c : clamped) report.clamped_logs += c;
  report.accuracy = report.per_variant.front().accuracy;
  report.ci95 = report.per_variant.front().ci95;
  return report;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const Dataset& dataset,
                               const EpisodeSpec& spec, std::size_t episodes, std::uint64_t seed,
                               int workers, const std::vector<Variant>& variants) {
  const auto ck = load_checkpoint(checkpoint);
  if (ck.config.embedder.kind == EmbedderSpec::Kind::kPrecomputed &&
      !(ck.config.cube() == dataset.manifest.dims)) {
    throw CheckpointError("checkpoint model expects cubes " + ck.config.cube().shape().to_string() +
                          ", dataset has " + dataset.manifest.dims.shape().to_string());
  }
  return evaluate(ck.config, ck.params, dataset, spec, episodes, seed, workers, variants);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["accuracy"] = accuracy;
  j["ci95"] = ci95;
  j["episodes"] = episodes;
  j["queries_per_episode"] = queries_per_episode;
  j["seed"] = seed;
  j["config_fingerprint"] = config_fingerprint;
  j["clamped_logs"] = clamped_logs;
  j["per_variant"] = nlohmann::json::object();
  for (const auto& v : per_variant) {
    j["per_variant"][variant_name(v.variant)] = {
        {"accuracy", v.accuracy}, {"ci95", v.ci95}, {"correct", v.correct}, {"total", v.total}};
  }
  return j.dump(2);
}

}  // namespace mastaf
