#pragma once

// Video embedders: map a sample to its feature cube, and average the cubes of
// a support class into its prototype.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mastaf/fcube.hpp"
#include "mastaf/ops.hpp"
#include "mastaf/tape.hpp"

namespace mastaf {

// Raw frames, n x C_in x H_in x W_in.
struct FrameStack {
  std::size_t frames = 1;
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<float> values;

  Shape shape() const { return Shape{frames, channels, height, width}; }
};

struct VideoSample {
  std::string id;
  // Label inside the episode (0..C-1); -1 outside an episode.
  int class_id = -1;
  // Global class id (the dataset manifest id).
  int global_class_id = -1;
  std::variant<FrameStack, FeatureCube> payload;
};

struct ConvBlock {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t pool_t = 2;
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;
};

// Stack of conv3d -> ReLU -> average-pool blocks over a FrameStack.
struct ToyConvSpec {
  std::size_t frames = 8;
  std::size_t in_channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<ConvBlock> blocks{ConvBlock{8, 3, 2, 2, 2}, ConvBlock{16, 3, 2, 2, 2}};
};

struct EmbedderSpec {
  enum class Kind { kPrecomputed, kToyConv3d };

  Kind kind = Kind::kPrecomputed;
  // Declared output cube.
  CubeDims output{8, 2, 2, 2};
  ToyConvSpec toy;

  static EmbedderSpec precomputed(CubeDims dims);
  static EmbedderSpec toy_conv3d(ToyConvSpec toy);

  // Output dims the toy stack actually produces for its declared input.
  CubeDims toy_output_dims() const;
  // Throws ConfigError if declared output disagrees with the layer stack.
  void validate() const;

  struct ParamShape {
    std::string name;
    Shape shape;
  };
  // Learnable tensors, in binding order: conv{i}.weight, conv{i}.bias.
  std::vector<ParamShape> parameter_shapes() const;
  // Forward MACs for one sample.
  std::uint64_t macs_per_sample() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) conv weights, zero biases.
std::vector<std::vector<float>> init_embedder_params(const EmbedderSpec& spec, std::mt19937_64& rng);

template <typename T>
std::vector<T> convert_values(std::span<const float> v) {
  return std::vector<T>(v.begin(), v.end());
}

// Feature cube for one sample. `params` follows parameter_shapes() order and
// is ignored by the precomputed embedder, whose cube enters the graph as a
// constant.
template <typename T>
Var<T> embed(Tape<T>& tape, const EmbedderSpec& spec, const std::vector<Var<T>>& params,
             const VideoSample& sample) {
  if (spec.kind == EmbedderSpec::Kind::kPrecomputed) {
    const auto* cube = std::get_if<FeatureCube>(&sample.payload);
    if (cube == nullptr) {
      throw ConfigError("embed: precomputed embedder given a raw frame payload (sample " +
                        sample.id + ")");
    }
    if (!(cube->dims() == spec.output)) {
      throw DimensionError("embed: cube " + cube->dims().shape().to_string() +
                           " does not match declared " + spec.output.shape().to_string());
    }
    return tape.constant(cube->dims().shape(), convert_values<T>(cube->values()));
  }

  const auto* frames = std::get_if<FrameStack>(&sample.payload);
  if (frames == nullptr) {
    throw ConfigError("embed: toy-conv3d embedder given a precomputed cube (sample " + sample.id +
                      ")");
  }
  const auto& toy = spec.toy;
  if (frames->frames != toy.frames || frames->channels != toy.in_channels ||
      frames->height != toy.height || frames->width != toy.width) {
    throw DimensionError("embed: frame stack " + frames->shape().to_string() +
                         " does not match the embedder input");
  }
  if (params.size() != 2 * toy.blocks.size()) {
    throw ConfigError("embed: expected " + std::to_string(2 * toy.blocks.size()) +
                      " embedder parameters, got " + std::to_string(params.size()));
  }
  auto x = tape.constant(frames->shape(), convert_values<T>(frames->values));
  x = ops::swap_leading_axes(x);  // [C_in, n, H, W]
  for (std::size_t b = 0; b < toy.blocks.size(); ++b) {
    const auto& blk = toy.blocks[b];
    x = ops::conv3d(x, params[2 * b], params[2 * b + 1]);
    x = ops::relu(x);
    x = ops::avg_pool3d(x, blk.pool_t, blk.pool_h, blk.pool_w);
  }
  if (!(CubeDims::from_shape(x.shape()) == spec.output)) {
    throw DimensionError("embed: produced " + x.shape().to_string() + ", declared " +
                         spec.output.shape().to_string());
  }
  return x;
}

// Class prototype: elementwise mean of K >= 1 equally shaped cubes.
template <typename T>
Var<T> prototype(const std::vector<Var<T>>& cubes) {
  if (cubes.empty()) throw DimensionError("prototype: empty list of cubes");
  return ops::mean_of(cubes);
}

}  // namespace mastaf
