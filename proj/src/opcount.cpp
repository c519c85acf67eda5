#include "mastaf/opcount.hpp"

#include <random>

namespace mastaf {

OpCountReport count_ops(const ModelConfig& config, const EpisodeSpec& spec, bool training_head) {
  spec.validate();
  config.validate();
  const auto& d = config.cube();
  const std::uint64_t C = spec.ways, K = spec.shots, Q = spec.queries;
  const std::uint64_t N = d.numel();
  const std::uint64_t attn = attention_macs(d, config.attention);
  const std::uint64_t dist = 3 * N;

  OpCountReport r;
  r.dims = d;
  r.ways = spec.ways;
  r.shots = spec.shots;
  r.queries = spec.queries;
  r.variant = config.variant;
  r.training_head = training_head;
  r.attention_per_cube = attn;

  r.embed = (C * K + Q) * config.embedder.macs_per_sample() + C * K * N;
  switch (config.variant) {
    case Variant::kNeighbor:
      r.fusion = Q * C * dist;
      break;
    case Variant::kSelfOnly:
      r.self_attention = (C + Q) * attn;
      r.fusion = Q * C * dist;
      break;
    case Variant::kCrossOnly:
      r.cross_attention = Q * C * 2 * attn;
      r.fusion = Q * C * dist;
      break;
    case Variant::kFull:
      r.self_attention = (C + Q) * attn;
      r.cross_attention = Q * C * 2 * attn;
      r.fusion = 2 * Q * C * dist + Q * C;  // both branches + the averaging
      break;
  }
  if (training_head && config.global_loss_active()) {
    const std::uint64_t Z = config.fusion.num_global_classes;
    const std::uint64_t head = config.fusion.global_pool ? N + d.channels * Z : N * Z;
    r.fusion += Q * C * head;
  }
  return r;
}

OpCountReport instrumented_ops(const ModelConfig& config, const EpisodeSpec& spec,
                               bool training_head, std::uint64_t seed) {
  spec.validate();
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_values = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(normal(rng));
    return v;
  };
  auto make_sample = [&](int cls) {
    VideoSample s;
    s.class_id = cls;
    if (config.embedder.kind == EmbedderSpec::Kind::kPrecomputed) {
      s.payload = FeatureCube(config.cube(), random_values(config.cube().numel()));
    } else {
      const auto& t = config.embedder.toy;
      FrameStack f{t.frames, t.in_channels, t.height, t.width, {}};
      f.values = random_values(f.shape().numel());
      s.payload = std::move(f);
    }
    return s;
  };

  std::vector<VideoSample> storage;
  storage.reserve(spec.ways * spec.shots + spec.queries);
  Episode ep;
  ep.support.resize(spec.ways);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    for (std::size_t k = 0; k < spec.shots; ++k) {
      storage.push_back(make_sample(static_cast<int>(c)));
      ep.support[c].push_back(&storage.back());
    }
    ep.class_ids.push_back(static_cast<int>(c));
    ep.class_positions.push_back(c);
  }
  for (std::size_t q = 0; q < spec.queries; ++q) {
    const std::size_t c = q % spec.ways;
    storage.push_back(make_sample(static_cast<int>(c)));
    ep.queries.push_back(&storage.back());
    ep.query_labels.push_back(c);
  }

  const auto params = init_parameters(config, seed);
  Tape<float> tape;
  const auto vars = bind_parameters(tape, params);
  std::vector<std::size_t> labels;
  if (training_head) {
    for (std::size_t c = 0; c < spec.ways; ++c) labels.push_back(c % config.fusion.num_global_classes);
  }
  forward_episode(tape, config, vars, ep, labels);

  OpCountReport r = count_ops(config, spec, training_head);
  const auto& m = tape.macs();
  r.embed = m[Stage::kEmbed];
  r.self_attention = m[Stage::kSelfAttention];
  r.cross_attention = m[Stage::kCrossAttention];
  r.fusion = m[Stage::kFusion];
  return r;
}

}  // namespace mastaf
