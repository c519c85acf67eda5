#include "mastaf/embedding.hpp"

#include <cmath>

#include "mastaf/kernels.hpp"

namespace mastaf {

EmbedderSpec EmbedderSpec::precomputed(CubeDims dims) {
  EmbedderSpec s;
  s.kind = Kind::kPrecomputed;
  s.output = dims;
  return s;
}

EmbedderSpec EmbedderSpec::toy_conv3d(ToyConvSpec toy) {
  EmbedderSpec s;
  s.kind = Kind::kToyConv3d;
  s.toy = std::move(toy);
  s.output = s.toy_output_dims();
  return s;
}

CubeDims EmbedderSpec::toy_output_dims() const {
  CubeDims d{toy.in_channels, toy.frames, toy.height, toy.width};
  for (const auto& b : toy.blocks) {
    if (b.kernel % 2 == 0 || b.pool_t == 0 || b.pool_h == 0 || b.pool_w == 0 ||
        d.frames % b.pool_t || d.height % b.pool_h || d.width % b.pool_w) {
      throw ConfigError("toy-conv3d: block geometry does not divide the input extents");
    }
    d = CubeDims{b.out_channels, d.frames / b.pool_t, d.height / b.pool_h, d.width / b.pool_w};
  }
  return d;
}

void EmbedderSpec::validate() const {
  if (kind == Kind::kPrecomputed) return;
  if (toy.blocks.empty()) throw ConfigError("toy-conv3d: needs at least one block");
  if (!(toy_output_dims() == output)) {
    throw ConfigError("toy-conv3d: declared output " + output.shape().to_string() +
                      " but the layer stack produces " + toy_output_dims().shape().to_string());
  }
}

std::vector<EmbedderSpec::ParamShape> EmbedderSpec::parameter_shapes() const {
  std::vector<ParamShape> out;
  if (kind == Kind::kPrecomputed) return out;
  std::size_t in = toy.in_channels;
  for (std::size_t i = 0; i < toy.blocks.size(); ++i) {
    const auto& b = toy.blocks[i];
    const std::string prefix = "embedder.conv" + std::to_string(i);
    out.push_back({prefix + ".weight", Shape{b.out_channels, in, b.kernel, b.kernel, b.kernel}});
    out.push_back({prefix + ".bias", Shape{b.out_channels}});
    in = b.out_channels;
  }
  return out;
}

std::uint64_t EmbedderSpec::macs_per_sample() const {
  if (kind == Kind::kPrecomputed) return 0;
  std::uint64_t total = 0;
  CubeDims d{toy.in_channels, toy.frames, toy.height, toy.width};
  for (const auto& b : toy.blocks) {
    kernels::ConvGeometry g{d.channels, b.out_channels, d.frames, d.height, d.width, b.kernel};
    total += kernels::conv3d_macs(g);
    kernels::PoolGeometry p{b.out_channels, d.frames, d.height, d.width, b.pool_t, b.pool_h, b.pool_w};
    total += kernels::avg_pool3d_macs(p);
    d = CubeDims{b.out_channels, d.frames / b.pool_t, d.height / b.pool_h, d.width / b.pool_w};
  }
  return total;
}

std::vector<std::vector<float>> init_embedder_params(const EmbedderSpec& spec,
                                                     std::mt19937_64& rng) {
  std::vector<std::vector<float>> out;
  for (const auto& p : spec.parameter_shapes()) {
    std::vector<float> v(p.shape.numel(), 0.0f);
    if (p.shape.rank() == 5) {
      const double fan_in = static_cast<double>(p.shape[1] * p.shape[2] * p.shape[3] * p.shape[4]);
      const double bound = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& x : v) x = static_cast<float>(u(rng));
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace mastaf
