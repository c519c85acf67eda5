#pragma once

// Feature cubes and their on-disk form.
//
// .fcube layout, little-endian:
//   bytes 0..3   magic "MFC1"
//   u32          rank (always 4)
//   u32 x 4      C', T', H', W'
//   f32 x N      values in (c, t, h, w) order, w fastest

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mastaf/shape.hpp"

namespace mastaf {

struct CubeDims {
  std::size_t channels = 1;
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  // Spatio-temporal positions L = T' * H' * W'.
  std::size_t positions() const noexcept { return frames * height * width; }
  std::size_t numel() const noexcept { return channels * positions(); }
  Shape shape() const { return Shape{channels, frames, height, width}; }
  Shape position_shape() const { return Shape{frames, height, width}; }

  static CubeDims from_shape(const Shape& s);
  friend bool operator==(const CubeDims&, const CubeDims&) = default;
};

// Spatio-temporal representation of one video, C' x T' x H' x W'.
class FeatureCube {
 public:
  FeatureCube(CubeDims dims, std::vector<float> values);

  const CubeDims& dims() const noexcept { return dims_; }
  std::span<const float> values() const noexcept { return values_; }

  friend bool operator==(const FeatureCube&, const FeatureCube&) = default;

 private:
  CubeDims dims_;
  std::vector<float> values_;
};

inline constexpr std::uint32_t kMaxCubeElements = 1u << 28;

std::vector<std::byte> encode_fcube(const FeatureCube& cube);
FeatureCube decode_fcube(std::span<const std::byte> bytes);

void store_fcube(const std::filesystem::path& path, const FeatureCube& cube);
FeatureCube load_fcube(const std::filesystem::path& path);

}  // namespace mastaf
