#include "mastaf/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include <json.hpp>

#include "mastaf/finite_diff.hpp"

namespace mastaf {
namespace {

struct Fixture {
  std::vector<std::vector<VideoSample>> samples;
  Episode episode;
  std::vector<std::size_t> global_labels;
};

VideoSample random_frames(const ToyConvSpec& toy, std::string id, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  FrameStack f{toy.frames, toy.in_channels, toy.height, toy.width, {}};
  f.values.resize(f.shape().numel());
  for (auto& v : f.values) v = n(rng);
  VideoSample s;
  s.id = std::move(id);
  s.payload = std::move(f);
  return s;
}

VideoSample random_cube(const CubeDims& dims, std::string id, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dims.numel());
  for (auto& x : v) x = n(rng);
  VideoSample s;
  s.id = std::move(id);
  s.payload = FeatureCube(dims, std::move(v));
  return s;
}

Fixture make_fixture(const GradcheckConfig& config, std::mt19937_64& rng) {
  const auto& spec = config.episode;
  const auto& emb = config.model.embedder;
  Fixture fx;
  fx.samples.resize(spec.ways);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    for (std::size_t k = 0; k < spec.shots + spec.queries; ++k) {
      std::string id = "c" + std::to_string(c) + "_s" + std::to_string(k);
      fx.samples[c].push_back(emb.kind == EmbedderSpec::Kind::kToyConv3d
                                  ? random_frames(emb.toy, id, rng)
                                  : random_cube(emb.output, id, rng));
      fx.samples[c].back().class_id = static_cast<int>(c);
    }
  }
  // The Episode keeps pointers, so fill it only after samples stop moving.
  const std::size_t z = config.model.fusion.num_global_classes;
  std::uniform_int_distribution<std::size_t> label(0, z - 1);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    std::vector<const VideoSample*> shots;
    for (std::size_t k = 0; k < spec.shots; ++k) shots.push_back(&fx.samples[c][k]);
    fx.episode.support.push_back(shots);
    fx.episode.class_ids.push_back(static_cast<int>(c));
    fx.episode.class_positions.push_back(c);
    fx.global_labels.push_back(label(rng));
  }
  for (std::size_t q = 0; q < spec.queries; ++q) {
    const std::size_t c = q % spec.ways;
    fx.episode.queries.push_back(&fx.samples[c][spec.shots + q / spec.ways]);
    fx.episode.query_labels.push_back(c);
  }
  return fx;
}

double loss_at(const GradcheckConfig& config, const Fixture& fx, const ParamSetT<double>& params) {
  Tape<double> tape;
  const auto vars = bind_parameters(tape, params);
  return forward_episode(tape, config.model, vars, fx.episode, fx.global_labels).loss_total.item();
}

}  // namespace

GradcheckConfig GradcheckConfig::small() {
  GradcheckConfig g;
  ToyConvSpec toy;
  toy.frames = 4;
  toy.in_channels = 2;
  toy.height = 4;
  toy.width = 4;
  toy.blocks = {ConvBlock{3, 3, 2, 2, 2}, ConvBlock{4, 3, 1, 1, 1}};
  g.model.embedder = EmbedderSpec::toy_conv3d(toy);
  g.model.attention.meta_dim = 6;
  g.model.fusion.num_global_classes = 3;
  g.model.fusion.lambda = 2.0;
  g.model.variant = Variant::kFull;
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const GradcheckConfig& config, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  config.model.validate();
  config.episode.validate();
  if (!(config.epsilon > 0.0)) throw ConfigError("gradcheck epsilon must be > 0");
  if (config.model.fusion.num_global_classes < 1) {
    throw ConfigError("gradcheck needs at least one global class");
  }

  std::mt19937_64 rng(mix_seed(seed, 0x6C));
  const Fixture fx = make_fixture(config, rng);

  // Small random biases so no bias sits at a symmetric point.
  auto params = init_parameters(config.model, mix_seed(seed, 0x9A)).cast<double>();
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name.find("bias") != std::string::npos ||
        params[i].name.find(".b_") != std::string::npos) {
      for (auto& v : params[i].value) v += jitter(rng);
    }
  }

  Tape<double> tape;
  if (!config.corrupt_op.empty()) tape.inject_fault(config.corrupt_op, config.corrupt_factor);
  const auto vars = bind_parameters(tape, params);
  auto out = forward_episode(tape, config.model, vars, fx.episode, fx.global_labels);

  GradcheckReport report;
  report.loss = out.loss_total.item();
  tape.backward(out.loss_total);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamCheck pc;
    pc.name = params[pi].name;
    pc.elements = params[pi].value.size();
    const auto analytic = vars.leaves[pi].grad();
    auto trial = params;
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> p) {
          std::copy(p.begin(), p.end(), trial[pi].value.begin());
          return loss_at(config, fx, trial);
        },
        params[pi].value, config.epsilon);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      double e = relative_error(a, numeric[i], config.floor);
      double n = numeric[i];
      for (double step = config.epsilon / 10.0; e >= config.tolerance && step >= config.epsilon / 100.0;
           step /= 10.0) {
        trial = params;
        const double saved = trial[pi].value[i];
        trial[pi].value[i] = saved + step;
        const double up = loss_at(config, fx, trial);
        trial[pi].value[i] = saved - step;
        const double down = loss_at(config, fx, trial);
        const double retry = (up - down) / (2.0 * step);
        const double retry_error = relative_error(a, retry, config.floor);
        if (retry_error < config.tolerance) {
          ++report.kink_retries;
          e = retry_error;
          n = retry;
        }
      }
      pc.max_abs_analytic = std::max(pc.max_abs_analytic, std::abs(a));
      if (e > pc.max_rel_error) pc.max_rel_error = e;
      if (e > report.worst_rel_error || report.worst_param.empty()) {
        report.worst_rel_error = e;
        report.worst_param = pc.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = n;
      }
    }
    report.params.push_back(pc);
  }
  report.passed = std::isfinite(report.worst_rel_error) && report.worst_rel_error < config.tolerance;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string GradcheckReport::to_json() const {
  nlohmann::json j;
  j["passed"] = passed;
  j["worst_rel_error"] = worst_rel_error;
  j["worst_param"] = worst_param;
  j["worst_index"] = worst_index;
  j["worst_analytic"] = worst_analytic;
  j["worst_numeric"] = worst_numeric;
  j["kink_retries"] = kink_retries;
  j["loss"] = loss;
  j["seconds"] = seconds;
  j["params"] = nlohmann::json::array();
  for (const auto& p : params) {
    j["params"].push_back({{"name", p.name},
                           {"elements", p.elements},
                           {"max_rel_error", p.max_rel_error},
                           {"max_abs_analytic", p.max_abs_analytic}});
  }
  return j.dump(2);
}

}  // namespace mastaf
