// Acceptance suite. One PASS/FAIL line per criterion; exit status is non-zero
// if any selected criterion fails. `--only N` runs a single criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "helpers.hpp"
#include "mastaf/checkpoint.hpp"
#include "mastaf/gradcheck.hpp"
#include "mastaf/log.hpp"
#include "mastaf/opcount.hpp"
#include "mastaf/synthetic.hpp"
#include "mastaf/trainer.hpp"
#include "oracle.hpp"

using namespace mastaf;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and protocol constants.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kOracleTolerance = 1e-6;
constexpr int kOracleEpisodes = 100;
constexpr double kOracleSeconds = 60.0;
constexpr int kNormCalls = 10000;
constexpr double kNormTolerance = 1e-6;
constexpr double kUniformTolerance = 1e-7;
constexpr std::size_t kTrainSteps = 5000;
constexpr std::size_t kEvalEpisodes = 1000;
constexpr double kMinAccuracy = 0.90;
constexpr double kMinGain = 0.05;
constexpr double kLearningSeconds = 15 * 60.0;
constexpr std::size_t kChanceEpisodes = 2000;
constexpr double kChance = 0.20;
constexpr double kChanceTolerance = 0.03;
constexpr std::uint64_t kSeed = 42;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = GradcheckConfig::small();
  cfg.tolerance = kGradTolerance;
  const auto r = gradcheck(cfg, kSeed);
  const double secs = seconds_since(t0);
  bool groups = true;
  for (const char* prefix : {"embedder.", "self.", "cross.", "global."}) {
    bool seen = false;
    for (const auto& p : r.params) seen = seen || p.name.rfind(prefix, 0) == 0;
    groups = groups && seen;
  }
  const auto& d = cfg.model.cube();
  return {r.passed && groups && secs < kGradSeconds,
          fmt::format("max rel err {:.2e} ({}) over {} tensors, C'={} T'={} H'=W'={} Z={}, "
                      "2-way 1-shot, double, {:.2f}s",
                      r.worst_rel_error, r.worst_param, r.params.size(), d.channels, d.frames,
                      d.height, cfg.model.fusion.num_global_classes, secs)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(kSeed);
  double worst = 0.0;
  for (int e = 0; e < kOracleEpisodes; ++e) {
    std::uniform_int_distribution<std::size_t> ch(1, 8), ways(2, 5), shots(1, 3);
    CubeDims d{ch(rng), 1 + rng() % 2, 1 + rng() % 2, 1 + rng() % 2};
    if (d.positions() < 2) d.width = 2;
    const std::size_t C = ways(rng), K = shots(rng);
    auto cfg = testing_helpers::cube_model(d, 1 + rng() % (d.positions() - 1), 5);
    cfg.variant = Variant::kFull;
    auto params = init_parameters(cfg, rng()).cast<double>();
    testing_helpers::jitter(params, rng, 0.2);
    const auto ep = testing_helpers::random_episode(d, C, K, 1, rng, 0.5f);
    const auto got = testing_helpers::scores_of(cfg, params, ep.episode).at(0);

    std::vector<std::vector<oracle::Cube>> support(C);
    for (std::size_t c = 0; c < C; ++c) {
      for (const auto& s : ep.support[c]) {
        support[c].push_back(oracle::to_cube(std::get<FeatureCube>(s.payload).values(),
                                             d.channels, d.positions()));
      }
    }
    const auto want = oracle::score(
        cfg, params, support,
        oracle::to_cube(std::get<FeatureCube>(ep.queries[0].payload).values(), d.channels,
                        d.positions()));
    for (std::size_t k = 0; k < C; ++k) {
      worst = std::max({worst, std::abs(got.p_self[k] - want.p_self[k]),
                        std::abs(got.p_cross[k] - want.p_cross[k]),
                        std::abs(got.p_fused[k] - want.p_fused[k])});
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kOracleTolerance && secs < kOracleSeconds,
          fmt::format("max |diff| {:.2e} over {} episodes (C'<=8, L<=8, C<=5, K<=3), {:.2f}s",
                      worst, kOracleEpisodes, secs)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome normalization() {
  std::mt19937_64 rng(kSeed + 3);
  double worst = 0.0;
  bool mean_exact = true;
  for (int call = 0; call < kNormCalls; ++call) {
    CubeDims d{1 + rng() % 8, 1 + rng() % 2, 1 + rng() % 2, 2};
    const std::size_t C = 2 + rng() % 4;
    AttentionConfig att;
    att.meta_dim = 1 + rng() % (d.positions() - 1);
    att.tau = std::array{0.025, 0.1, 1.0}[call % 3];
    Tape<float> t;
    auto leaf = [&](Shape s) { return t.leaf(s, testing_helpers::normal_values(s.numel(), rng, 0.5f)); };
    const std::size_t L = d.positions();
    AttentionVars<float> v{leaf(Shape{L, att.meta_dim}), leaf(Shape{att.meta_dim}),
                           leaf(Shape{att.meta_dim, L}), leaf(Shape{L})};
    const auto query = leaf(d.shape());
    auto sum = [](std::span<const float> x) {
      return std::accumulate(x.begin(), x.end(), 0.0);
    };
    const auto qf = flatten_positions(query);
    worst = std::max(worst, std::abs(sum(attention_weights(relation_map(qf, qf), v, att,
                                                           d.position_shape())
                                             .value()) -
                                     1.0));
    std::vector<Var<float>> selfs;
    std::vector<CrossPair<float>> pairs;
    for (std::size_t c = 0; c < C; ++c) {
      const auto proto = leaf(d.shape());
      selfs.push_back(self_attend(proto, v, att));
      pairs.push_back(cross_attend(query, proto, v, v, att));
    }
    const auto ps = p_self(self_attend(query, v, att), selfs);
    const auto pc = p_cross(pairs);
    const auto pf = fuse(ps, pc);
    for (const auto* p : {&ps, &pc, &pf}) worst = std::max(worst, std::abs(sum(p->value()) - 1.0));
    for (std::size_t k = 0; k < C; ++k) {
      mean_exact = mean_exact && pf.value()[k] == (ps.value()[k] + pc.value()[k]) * 0.5f;
    }
  }
  return {worst <= kNormTolerance && mean_exact,
          fmt::format("max |sum-1| {:.2e} over {} randomized calls (float); fuse == mean: {}",
                      worst, kNormCalls, mean_exact ? "exact" : "NOT exact")};
}

// ---- 4 ----------------------------------------------------------------------

Outcome symmetry() {
  std::mt19937_64 rng(kSeed + 4);
  double worst_a = 0.0, worst_out = 0.0;
  bool transpose_exact = true;
  for (int trial = 0; trial < 200; ++trial) {
    const CubeDims d{1 + rng() % 8, 1 + rng() % 2, 2, 1 + rng() % 2};
    const std::size_t L = d.positions();
    AttentionConfig att;
    att.meta_dim = 1 + rng() % (L - 1);
    Tape<float> t;
    auto leaf = [&](Shape s) { return t.leaf(s, testing_helpers::normal_values(s.numel(), rng, 0.5f)); };
    AttentionVars<float> v{leaf(Shape{L, att.meta_dim}), leaf(Shape{att.meta_dim}),
                           leaf(Shape{att.meta_dim, L}), leaf(Shape{L})};
    const auto channel = testing_helpers::normal_values(d.channels, rng);
    std::vector<float> vals(d.numel());
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t i = 0; i < L; ++i) vals[c * L + i] = channel[c];
    }
    const auto cube = t.leaf(d.shape(), vals);
    const auto f = flatten_positions(cube);
    const auto a = attention_weights(relation_map(f, f), v, att, d.position_shape());
    for (float x : a.value()) worst_a = std::max(worst_a, std::abs(x - 1.0 / L));
    const auto out = self_attend(cube, v, att);
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double want = (1.0 + 1.0 / L) * vals[k];
      worst_out = std::max(worst_out, std::abs(out.value()[k] - want) / std::max(1.0, std::abs(want)));
    }

    const auto q = flatten_positions(leaf(d.shape()));
    const auto c = flatten_positions(leaf(d.shape()));
    const auto mq = relation_map(c, q), mc = relation_map(q, c);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        transpose_exact = transpose_exact && mq.value()[i * L + j] == mc.value()[j * L + i];
      }
    }
  }
  return {worst_a <= kUniformTolerance && worst_out <= kUniformTolerance && transpose_exact,
          fmt::format("max |A-1/L| {:.2e}, max rel |out-(1+1/L)x| {:.2e}, transpose identity {}",
                      worst_a, worst_out, transpose_exact ? "exact" : "VIOLATED")};
}

// ---- 5, 6 -------------------------------------------------------------------

struct Benchmark {
  Dataset train;
  Dataset test;
};

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    SyntheticConfig sc;  // 20/5/5 classes, C'=8 T'=2 H'=W'=2, noise 0.5, seed 42
    return Benchmark{synthesize_split(sc, Split::kTrain), synthesize_split(sc, Split::kTest)};
  }();
  return b;
}

TrainConfig standard_protocol(Variant v) {
  TrainConfig c;
  c.model = testing_helpers::cube_model(SyntheticConfig{}.dims, 6, benchmark().train.num_classes());
  c.model.variant = v;
  c.steps = kTrainSteps;
  c.seed = kSeed;
  return c;
}

struct Trained {
  TrainConfig config;
  TrainResult result;
  EvalReport trained;
  EvalReport untrained;
  double seconds = 0;
};

const Trained& trained(Variant v) {
  static std::map<Variant, std::unique_ptr<Trained>> cache;
  auto& slot = cache[v];
  if (slot) return *slot;
  const auto t0 = std::chrono::steady_clock::now();
  auto config = standard_protocol(v);
  config.normalize();
  const auto init = init_parameters(config.model, mix_seed(config.seed, 0x1417));
  auto result = train(config, benchmark().train);
  const EpisodeSpec spec{5, 1, 1};
  auto after = evaluate(config.model, result.store.params(), benchmark().test, spec,
                        kEvalEpisodes, kSeed);
  auto before = evaluate(config.model, init, benchmark().test, spec, kEvalEpisodes, kSeed);
  slot = std::make_unique<Trained>(
      Trained{config, std::move(result), std::move(after), std::move(before), seconds_since(t0)});
  return *slot;
}

Outcome learning() {
  const auto& t = trained(Variant::kFull);
  const double acc = t.trained.accuracy, base = t.untrained.accuracy;
  const bool reach = acc >= kMinAccuracy;
  const bool gain = acc >= base + kMinGain;
  return {reach && gain && t.seconds < kLearningSeconds,
          fmt::format("test acc {:.4f} (>= {:.2f}: {}), untrained {:.4f}, gain {:+.4f} "
                      "(>= {:.2f}: {}), {} steps, {:.1f}s",
                      acc, kMinAccuracy, reach ? "yes" : "no", base, acc - base, kMinGain,
                      gain ? "yes" : "no", kTrainSteps, t.seconds)};
}

Outcome table_ordering() {
  const double full = trained(Variant::kFull).trained.accuracy;
  const double nb = trained(Variant::kNeighbor).trained.accuracy;
  const auto& so = trained(Variant::kSelfOnly).trained;
  const auto& co = trained(Variant::kCrossOnly).trained;
  const auto& best = so.accuracy >= co.accuracy ? so : co;
  const double margin = 2.0 * std::max(best.ci95, trained(Variant::kFull).trained.ci95);
  const bool a = full >= nb;
  const bool b = full >= best.accuracy - margin;
  return {a && b, fmt::format("full {:.4f}, neighbor {:.4f}, self-only {:.4f}, cross-only {:.4f}; "
                              "full>=neighbor {}, full>=max-2CI ({:.4f}) {}",
                              full, nb, so.accuracy, co.accuracy, a ? "yes" : "no",
                              best.accuracy - margin, b ? "yes" : "no")};
}

// ---- 7 ----------------------------------------------------------------------

Outcome efficiency() {
  constexpr std::size_t kStride = 4;
  const std::vector<std::size_t> frames{8, 12, 16};
  const EpisodeSpec spec{5, 1, 1};
  std::uint64_t discrepancy = 0;
  bool growth = true;
  std::vector<std::uint64_t> totals;
  for (std::size_t n : frames) {
    const CubeDims d{8, n / kStride, 2, 2};
    const auto cfg = testing_helpers::cube_model(d, 6, 20);
    const auto closed = count_ops(cfg, spec, false);
    const auto measured = instrumented_ops(cfg, spec, false, kSeed);
    discrepancy += closed.total() > measured.total() ? closed.total() - measured.total()
                                                     : measured.total() - closed.total();
    discrepancy += closed.same_counts(measured) ? 0 : 1;
    // Independent closed form: per-cube attention C'L^2 + 2L^2 + 2Ll + C'L on
    // C+Q self cubes and 2QC cross cubes, 2QC distances of 3N, QC averages,
    // and the C K N prototype means.
    const std::uint64_t L = d.positions(), Cp = 8, l = 6, N = d.numel(), C = 5, Q = 1, K = 1;
    const std::uint64_t attn = Cp * L * L + 2 * L * L + 2 * L * l + Cp * L;
    const std::uint64_t predicted = C * K * N + (C + Q) * attn + 2 * Q * C * attn +
                                    2 * Q * C * 3 * N + Q * C;
    growth = growth && predicted == closed.total();
    totals.push_back(closed.total());
  }
  bool linear = true;
  const auto cfg = testing_helpers::cube_model(CubeDims{8, 2, 2, 2}, 6, 20);
  for (bool head : {false, true}) {
    std::vector<std::uint64_t> ways, shots;
    for (std::size_t c = 2; c <= 10; ++c) ways.push_back(count_ops(cfg, {c, 1, 1}, head).total());
    for (std::size_t k = 1; k <= 9; ++k) shots.push_back(count_ops(cfg, {5, k, 1}, head).total());
    for (const auto& s : {ways, shots}) {
      for (std::size_t i = 2; i < s.size(); ++i) linear = linear && s[i] - s[i - 1] == s[1] - s[0];
    }
  }
  const bool monotone = std::is_sorted(totals.begin(), totals.end());
  return {discrepancy == 0 && growth && linear && monotone,
          fmt::format("frames 8,12,16 -> totals {}, {}, {}; instrumented discrepancy {}; "
                      "closed-form growth {}; linear in C and K: {}",
                      totals[0], totals[1], totals[2], discrepancy, growth ? "matches" : "MISMATCH",
                      linear ? "yes" : "no")};
}

// ---- 8 ----------------------------------------------------------------------

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "mastaf_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Two identical single-worker runs.
  auto cfg = standard_protocol(Variant::kFull);
  cfg.workers = 1;
  const auto a = train(cfg, benchmark().train, dir / "a");
  const auto b = train(cfg, benchmark().train, dir / "b");
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const bool trace_same = slurp(a.trace_path) == slurp(b.trace_path) && a.trace.size() == kTrainSteps;

  // Checkpoint round trip.
  const auto ck = load_checkpoint(a.checkpoint);
  bool ckpt_same = ck.params.same_layout(a.store.params());
  for (std::size_t i = 0; ckpt_same && i < ck.params.size(); ++i) {
    ckpt_same = std::memcmp(ck.params[i].value.data(), a.store.params()[i].value.data(),
                            ck.params[i].value.size() * sizeof(float)) == 0;
  }
  save_checkpoint(dir / "again.ckpt", ck.config, ck.params, ck.version);
  ckpt_same = ckpt_same && slurp(dir / "again.ckpt") == slurp(a.checkpoint);

  // Feature-cube round trip.
  const auto& cube = std::get<FeatureCube>(benchmark().test.samples[0][0].payload);
  store_fcube(dir / "x.fcube", cube);
  const bool cube_same = load_fcube(dir / "x.fcube") == cube;

  // Chance level: classes with identical (zero) centres carry no signal.
  SyntheticConfig flat;
  flat.center_scale = 0.0;
  flat.noise_std = 1.0;
  const auto noise = synthesize_split(flat, Split::kTest);
  const auto model = testing_helpers::cube_model(flat.dims, 6, 20);
  const auto chance = evaluate(model, init_parameters(model, kSeed), noise, EpisodeSpec{5, 1, 1},
                               kChanceEpisodes, kSeed);
  const bool chance_ok = std::abs(chance.accuracy - kChance) <= kChanceTolerance;

  return {trace_same && ckpt_same && cube_same && chance_ok,
          fmt::format("loss trace identical: {}; checkpoint bit-exact: {}; fcube bit-exact: {}; "
                      "chance accuracy {:.4f} over {} episodes (0.20 +/- 0.03: {})",
                      trace_same ? "yes" : "no", ckpt_same ? "yes" : "no",
                      cube_same ? "yes" : "no", chance.accuracy, kChanceEpisodes,
                      chance_ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  mastaf::log::set_level(mastaf::log::Level::kError);
  int only = 0;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0) only = std::atoi(argv[i + 1]);
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"reference equivalence", oracle_equivalence},
      {"normalization", normalization},
      {"symmetry", symmetry},
      {"learning at desk scale", learning},
      {"ablation ordering", table_ordering},
      {"efficiency trend", efficiency},
      {"determinism and round-trips", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("[{}] {}. {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
