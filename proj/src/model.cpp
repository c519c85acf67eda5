#include "mastaf/model.hpp"

#include <cmath>
#include <random>

namespace mastaf {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNeighbor: return "neighbor";
    case Variant::kSelfOnly: return "self-only";
    case Variant::kCrossOnly: return "cross-only";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kFull, Variant::kNeighbor, Variant::kSelfOnly, Variant::kCrossOnly}) {
    if (name == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant '" + name + "' (full|neighbor|self-only|cross-only)");
}

void ModelConfig::validate() const {
  embedder.validate();
  attention.validate(cube().positions());
  fusion.validate();
}

ParamSet init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ParamSet ps;
  {
    auto shapes = config.embedder.parameter_shapes();
    auto values = init_embedder_params(config.embedder, rng);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      ps.add(shapes[i].name, shapes[i].shape, std::move(values[i]));
    }
  }
  const std::size_t L = config.cube().positions();
  auto add_attention = [&](const std::string& prefix) {
    auto shapes = attention_parameter_shapes(prefix, config.attention, L);
    auto values = init_attention_params(config.attention, L, rng);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      ps.add(shapes[i].name, shapes[i].shape, std::move(values[i]));
    }
  };
  add_attention("self");
  if (config.share_cross_directions) {
    add_attention("cross");
  } else {
    add_attention("cross_query");
    add_attention("cross_class");
  }
  const Shape ws = config.fusion.weight_shape(config.cube());
  const double bound = 1.0 / std::sqrt(static_cast<double>(ws[0]));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<float> w(ws.numel());
  for (auto& x : w) x = static_cast<float>(u(rng));
  ps.add("global.weight", ws, std::move(w));
  ps.add("global.bias", Shape{config.fusion.num_global_classes},
         std::vector<float>(config.fusion.num_global_classes, 0.0f));
  return ps;
}

}  // namespace mastaf
