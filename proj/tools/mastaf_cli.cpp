// mastaf: synth, train, eval, gradcheck, flops, inspect.
//
// JSON results go to stdout, logs to stderr. Exit codes: 0 success, 1 runtime
// failure, 2 usage or validation error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mastaf/checkpoint.hpp"
#include "mastaf/errors.hpp"
#include "mastaf/fcube.hpp"
#include "mastaf/gradcheck.hpp"
#include "mastaf/log.hpp"
#include "mastaf/manifest.hpp"
#include "mastaf/opcount.hpp"
#include "mastaf/synthetic.hpp"
#include "mastaf/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mastaf;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

// Options shared by every command that builds episodes.
struct EpisodeFlags {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--ways", ways, "Classes per episode (C)")->capture_default_str();
    cmd->add_option("--shots", shots, "Support samples per class (K)")->capture_default_str();
    cmd->add_option("--queries", queries, "Queries per episode")->capture_default_str();
  }
  EpisodeSpec spec() const { return EpisodeSpec{ways, shots, queries}; }
};

struct DataFlags {
  std::string data;
  std::string manifest;

  void add(CLI::App* cmd, const char* split) {
    cmd->add_option("--data", data,
                    fmt::format("Dataset root from `synth`; reads <data>/{}/manifest.json", split));
    cmd->add_option("--manifest", manifest, "Manifest path (overrides --data)");
  }
  fs::path resolve(const char* split) const {
    if (!manifest.empty()) return manifest;
    if (data.empty()) throw ConfigError("one of --data or --manifest is required");
    check_splits();
    return fs::path(data) / split / "manifest.json";
  }

  // Every split found under --data must use its own class ids.
  void check_splits() const {
    std::vector<DatasetManifest> found;
    for (const char* s : {"train", "val", "test"}) {
      const auto p = fs::path(data) / s / "manifest.json";
      if (fs::exists(p)) found.push_back(load_manifest(p));
    }
    check_disjoint(found);
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = s.find(',', start);
    const auto item = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!item.empty()) out.push_back(item);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const char* flag) {
  std::vector<std::size_t> out;
  for (const auto& item : split_csv(s)) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item[0] == '-') {
      throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", flag, item));
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: empty list", flag));
  return out;
}

CubeDims parse_dims(const std::string& s) {
  const auto v = parse_sizes(s, "--dims");
  if (v.size() != 4) throw ConfigError("--dims needs four values C',T',H',W'");
  return CubeDims{v[0], v[1], v[2], v[3]};
}

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---- synth -----------------------------------------------------------------

struct SynthFlags {
  std::string out;
  SyntheticConfig config;
  std::string dims = "8,2,2,2";
};

void run_synth(const SynthFlags& f) {
  SyntheticConfig cfg = f.config;
  cfg.dims = parse_dims(f.dims);
  cfg.validate();
  const auto paths = generate_synthetic(cfg, f.out);
  print_json({{"train", paths.train.string()},
              {"val", paths.val.string()},
              {"test", paths.test.string()},
              {"seed", cfg.seed}});
}

// ---- train -----------------------------------------------------------------

struct ModelFlags {
  std::string variant = "full";
  double tau = 0.025;
  std::size_t meta_dim = 6;
  double lambda = 2.0;
  bool no_meta_learner = false;
  bool no_residual = false;
  bool no_bias = false;
  bool unshared_cross = false;
  bool no_global_pool = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "full | neighbor | self-only | cross-only")
        ->capture_default_str();
    cmd->add_option("--tau", tau, "Attention softmax temperature")->capture_default_str();
    cmd->add_option("--meta-dim", meta_dim, "Meta-learner bottleneck width (l)")
        ->capture_default_str();
    cmd->add_option("--lambda", lambda, "Weight of the global-class loss")->capture_default_str();
    cmd->add_flag("--no-meta-learner", no_meta_learner, "Use an all-ones attention kernel");
    cmd->add_flag("--no-residual", no_residual, "Scale cubes by A instead of (1 + A)");
    cmd->add_flag("--no-bias", no_bias, "Bias-free meta-learner layers");
    cmd->add_flag("--unshared-cross", unshared_cross,
                  "Separate cross-attention weights per direction");
    cmd->add_flag("--no-global-pool", no_global_pool,
                  "Global head on the flattened cube instead of channel means");
  }

  ModelConfig build(const CubeDims& dims, std::size_t global_classes) const {
    ModelConfig m;
    m.embedder = EmbedderSpec::precomputed(dims);
    m.attention.tau = tau;
    m.attention.meta_dim = meta_dim;
    m.attention.meta_learner = !no_meta_learner;
    m.attention.residual = !no_residual;
    m.attention.bias = !no_bias;
    m.share_cross_directions = !unshared_cross;
    m.fusion.lambda = lambda;
    m.fusion.num_global_classes = global_classes;
    m.fusion.global_pool = !no_global_pool;
    m.variant = parse_variant(variant);
    return m;
  }
};

struct TrainFlags {
  DataFlags data;
  EpisodeFlags episode;
  ModelFlags model;
  std::string out;
  double lr = 0.01;
  double momentum = 0.0;
  std::size_t steps = 5000;
  std::optional<std::size_t> episodes;
  std::size_t batch_episodes = 4;
  std::size_t checkpoint_every = 0;
  int workers = 1;
  std::uint64_t seed = 42;
};

void run_train(const TrainFlags& f) {
  const fs::path manifest_path = f.data.resolve("train");
  const auto manifest = load_manifest(manifest_path);

  TrainConfig cfg;
  cfg.episode = f.episode.spec();
  cfg.model = f.model.build(manifest.dims, manifest.classes.size());
  cfg.learning_rate = f.lr;
  cfg.momentum = f.momentum;
  cfg.batch_episodes = f.batch_episodes;
  cfg.steps = f.steps;
  if (f.episodes) {
    if (*f.episodes == 0) throw ConfigError("--episodes must be >= 1");
    cfg.steps = (*f.episodes + f.batch_episodes - 1) / std::max<std::size_t>(f.batch_episodes, 1);
  }
  cfg.checkpoint_every = f.checkpoint_every;
  cfg.workers = f.workers;
  cfg.seed = f.seed;
  // Validate before loading cubes so flag errors surface quickly.
  TrainConfig probe = cfg;
  for (const auto& w : probe.normalize()) log::warn("{}", w);
  cfg = probe;

  const auto dataset = load_dataset(manifest);
  log::info("training {} for {} steps x {} episodes on {} classes", variant_name(cfg.model.variant),
            cfg.steps, cfg.batch_episodes, dataset.num_classes());
  const auto result = train(cfg, dataset, f.out);
  const auto& last = result.trace.back();
  print_json({{"checkpoint", result.checkpoint.string()},
              {"loss_trace", result.trace_path.string()},
              {"steps", cfg.steps},
              {"final_loss", last.loss_total},
              {"variant", variant_name(cfg.model.variant)},
              {"lambda", cfg.model.fusion.lambda},
              {"config_fingerprint", config_fingerprint(cfg.model)},
              {"clamped_logs", result.clamped_logs}});
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
  DataFlags data;
  EpisodeFlags episode;
  std::string checkpoint;
  std::string split = "test";
  std::size_t episodes = 10000;
  std::string variants;
  int workers = 1;
  std::uint64_t seed = 42;
};

void run_eval(const EvalFlags& f) {
  if (f.episodes == 0) throw ConfigError("--episodes must be >= 1");
  if (f.workers < 1) throw ConfigError("--workers must be >= 1");
  f.episode.spec().validate();
  std::vector<Variant> extra;
  for (const auto& v : split_csv(f.variants)) extra.push_back(parse_variant(v));
  const auto manifest = load_manifest(f.data.resolve(f.split.c_str()));
  const auto dataset = load_dataset(manifest);
  const auto report =
      evaluate_checkpoint(f.checkpoint, dataset, f.episode.spec(), f.episodes, f.seed, f.workers, extra);
  std::cout << report.to_json() << std::endl;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
  std::uint64_t seed = 42;
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  double tau = 0.025;
  std::string variant = "full";
};

int run_gradcheck(const GradcheckFlags& f) {
  auto cfg = GradcheckConfig::small();
  cfg.epsilon = f.epsilon;
  cfg.tolerance = f.tolerance;
  cfg.model.attention.tau = f.tau;
  cfg.model.variant = parse_variant(f.variant);
  const auto report = gradcheck(cfg, f.seed);
  std::cout << report.to_json() << std::endl;
  log::info("gradcheck {}: worst relative error {:.3e} ({})", report.passed ? "passed" : "FAILED",
            report.worst_rel_error, report.worst_param);
  return report.passed ? 0 : kRuntimeFailure;
}

// ---- flops -----------------------------------------------------------------

struct FlopsFlags {
  std::string frames = "8,12,16";
  std::size_t temporal_stride = 4;
  std::size_t channels = 8;
  std::size_t height = 2;
  std::size_t width = 2;
  std::string ways = "5";
  std::string shots = "1";
  std::size_t queries = 1;
  ModelFlags model;
  bool training_head = false;
  std::size_t global_classes = 20;
  std::uint64_t seed = 42;
};

void run_flops(const FlopsFlags& f) {
  if (f.temporal_stride == 0) throw ConfigError("--temporal-stride must be >= 1");
  const auto frames = parse_sizes(f.frames, "--frames");
  const auto ways = parse_sizes(f.ways, "--ways");
  const auto shots = parse_sizes(f.shots, "--shots");
  json rows = json::array();
  for (std::size_t n : frames) {
    if (n < f.temporal_stride) {
      throw ConfigError(fmt::format("--frames {} is shorter than the temporal stride", n));
    }
    const CubeDims dims{f.channels, n / f.temporal_stride, f.height, f.width};
    const auto model = f.model.build(dims, f.global_classes);
    model.validate();
    for (std::size_t c : ways) {
      for (std::size_t k : shots) {
        const EpisodeSpec spec{c, k, f.queries};
        const auto closed = count_ops(model, spec, f.training_head);
        const auto measured = instrumented_ops(model, spec, f.training_head, f.seed);
        rows.push_back({{"frames", n},
                        {"dims", {dims.channels, dims.frames, dims.height, dims.width}},
                        {"positions", dims.positions()},
                        {"ways", c},
                        {"shots", k},
                        {"queries", f.queries},
                        {"variant", variant_name(model.variant)},
                        {"training_head", f.training_head},
                        {"embed", closed.embed},
                        {"self_attention", closed.self_attention},
                        {"cross_attention", closed.cross_attention},
                        {"fusion", closed.fusion},
                        {"attention_per_cube", closed.attention_per_cube},
                        {"total", closed.total()},
                        {"instrumented_total", measured.total()},
                        {"instrumented_match", closed.same_counts(measured)}});
      }
    }
  }
  print_json(rows);
}

// ---- inspect ---------------------------------------------------------------

void run_inspect(const std::string& path) {
  const auto cube = load_fcube(path);
  const auto v = cube.values();
  double sum = 0.0, sq = 0.0;
  float lo = v.empty() ? 0.0f : v[0], hi = lo;
  for (float x : v) {
    sum += x;
    sq += static_cast<double>(x) * x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double n = static_cast<double>(v.size());
  const double mean = sum / n;
  const auto& d = cube.dims();
  print_json({{"path", path},
              {"magic", "MFC1"},
              {"dims", {d.channels, d.frames, d.height, d.width}},
              {"elements", v.size()},
              {"min", lo},
              {"max", hi},
              {"mean", mean},
              {"std", std::sqrt(std::max(0.0, sq / n - mean * mean))}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot video classification with multi-angle spatio-temporal attention"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a Gaussian-cluster feature-cube dataset");
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--seed", synth.config.seed, "Random seed")->capture_default_str();
  cmd_synth->add_option("--noise-std", synth.config.noise_std, "Per-sample noise std")
      ->capture_default_str();
  cmd_synth->add_option("--center-scale", synth.config.center_scale, "Class centre scale")
      ->capture_default_str();
  cmd_synth->add_option("--train-classes", synth.config.train_classes)->capture_default_str();
  cmd_synth->add_option("--val-classes", synth.config.val_classes)->capture_default_str();
  cmd_synth->add_option("--test-classes", synth.config.test_classes)->capture_default_str();
  cmd_synth->add_option("--samples-per-class", synth.config.samples_per_class)
      ->capture_default_str();
  cmd_synth->add_option("--dims", synth.dims, "Cube dims C',T',H',W'")->capture_default_str();

  TrainFlags tr;
  auto* cmd_train = app.add_subcommand("train", "Episodic training");
  tr.data.add(cmd_train, "train");
  tr.episode.add(cmd_train);
  tr.model.add(cmd_train);
  cmd_train->add_option("--out", tr.out, "Output directory for checkpoints and loss trace")
      ->required();
  cmd_train->add_option("--lr", tr.lr, "SGD learning rate")->capture_default_str();
  cmd_train->add_option("--momentum", tr.momentum, "SGD momentum")->capture_default_str();
  cmd_train->add_option("--steps", tr.steps, "Optimizer steps")->capture_default_str();
  cmd_train->add_option("--episodes", tr.episodes,
                        "Total training episodes (overrides --steps: ceil(episodes / batch))");
  cmd_train->add_option("--batch-episodes", tr.batch_episodes, "Episodes per optimizer step")
      ->capture_default_str();
  cmd_train->add_option("--checkpoint-every", tr.checkpoint_every,
                        "Checkpoint interval in steps (0: final only)")
      ->capture_default_str();
  cmd_train->add_option("--workers", tr.workers, "Threads for the episode batch")
      ->capture_default_str();
  cmd_train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();

  EvalFlags ev;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on random episodes");
  ev.data.add(cmd_eval, "<split>");
  ev.episode.add(cmd_eval);
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  cmd_eval->add_option("--split", ev.split, "Split read from --data")->capture_default_str();
  cmd_eval->add_option("--episodes", ev.episodes, "Number of episodes")->capture_default_str();
  cmd_eval->add_option("--also", ev.variants,
                       "Extra variants scored with the same weights, comma separated");
  cmd_eval->add_option("--workers", ev.workers, "Evaluation threads")->capture_default_str();
  cmd_eval->add_option("--seed", ev.seed, "Random seed")->capture_default_str();

  GradcheckFlags gc;
  auto* cmd_gc = app.add_subcommand(
      "gradcheck", "Compare analytic gradients with central finite differences (64-bit)");
  cmd_gc->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  cmd_gc->add_option("--epsilon", gc.epsilon, "Finite-difference step")->capture_default_str();
  cmd_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  cmd_gc->add_option("--tau", gc.tau, "Attention temperature")->capture_default_str();
  cmd_gc->add_option("--variant", gc.variant, "Model variant")->capture_default_str();

  FlopsFlags fl;
  auto* cmd_flops = app.add_subcommand("flops", "Forward multiply-accumulate counts per stage");
  cmd_flops->add_option("--frames", fl.frames, "Input frame counts, comma separated")
      ->capture_default_str();
  cmd_flops->add_option("--temporal-stride", fl.temporal_stride, "Frames per cube time step")
      ->capture_default_str();
  cmd_flops->add_option("--channels", fl.channels, "Cube channels C'")->capture_default_str();
  cmd_flops->add_option("--height", fl.height, "Cube height H'")->capture_default_str();
  cmd_flops->add_option("--width", fl.width, "Cube width W'")->capture_default_str();
  cmd_flops->add_option("--ways", fl.ways, "Ways, comma separated")->capture_default_str();
  cmd_flops->add_option("--shots", fl.shots, "Shots, comma separated")->capture_default_str();
  cmd_flops->add_option("--queries", fl.queries, "Queries per episode")->capture_default_str();
  fl.model.add(cmd_flops);
  cmd_flops->add_flag("--training-head", fl.training_head, "Include the global-class head");
  cmd_flops->add_option("--global-classes", fl.global_classes, "Global classes (Z)")
      ->capture_default_str();
  cmd_flops->add_option("--seed", fl.seed, "Seed of the instrumented run")->capture_default_str();

  std::string inspect_path;
  std::uint64_t inspect_seed = 0;
  auto* cmd_inspect = app.add_subcommand("inspect", "Print a .fcube header and value statistics");
  cmd_inspect->add_option("file", inspect_path, ".fcube file")->required();
  cmd_inspect->add_option("--seed", inspect_seed, "Accepted for uniformity; unused")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*cmd_synth) run_synth(synth);
    if (*cmd_train) run_train(tr);
    if (*cmd_eval) run_eval(ev);
    if (*cmd_gc) return run_gradcheck(gc);
    if (*cmd_flops) run_flops(fl);
    if (*cmd_inspect) run_inspect(inspect_path);
  } catch (const ConfigError& e) {
    log::error("{}", e.what());
    return kUsageError;
  } catch (const TrainingAborted& e) {
    log::error("{} (step {}, episode seed {:#x})", e.what(), e.step(), e.episode_seed());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    log::error("{}", e.what());
    return kRuntimeFailure;
  }
  return 0;
}
