#include "mastaf/fcube.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "mastaf/errors.hpp"

namespace mastaf {
namespace {

constexpr std::byte kMagic[4] = {std::byte{0x4D}, std::byte{0x46}, std::byte{0x43},
                                 std::byte{0x31}};

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

CubeDims CubeDims::from_shape(const Shape& s) {
  if (s.rank() != 4) {
    throw DimensionError("feature cube needs rank 4, got " + s.to_string());
  }
  return CubeDims{s[0], s[1], s[2], s[3]};
}

FeatureCube::FeatureCube(CubeDims dims, std::vector<float> values)
    : dims_(dims), values_(std::move(values)) {
  if (dims_.channels == 0 || dims_.frames == 0 || dims_.height == 0 || dims_.width == 0) {
    throw DimensionError("feature cube extents must be positive");
  }
  if (values_.size() != dims_.numel()) {
    throw DimensionError("feature cube " + dims_.shape().to_string() + " given " +
                         std::to_string(values_.size()) + " values");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw DimensionError("feature cube holds a non-finite value");
  }
}

std::vector<std::byte> encode_fcube(const FeatureCube& cube) {
  const auto& d = cube.dims();
  std::vector<std::byte> out;
  out.reserve(24 + 4 * d.numel());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, 4);
  for (std::size_t e : {d.channels, d.frames, d.height, d.width}) {
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (float v : cube.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

FeatureCube decode_fcube(std::span<const std::byte> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(FormatError::Kind::kBadMagic, "fcube: bad magic (expected \"MFC1\")");
  }
  if (bytes.size() < 8) {
    throw FormatError(FormatError::Kind::kTruncated, "fcube: truncated before rank");
  }
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank != 4) {
    throw FormatError(FormatError::Kind::kBadRank,
                      "fcube: rank must be 4, got " + std::to_string(rank));
  }
  if (bytes.size() < 24) {
    throw FormatError(FormatError::Kind::kTruncated, "fcube: truncated header");
  }
  std::uint64_t count = 1;
  std::size_t ext[4];
  for (std::size_t i = 0; i < 4; ++i) {
    const std::uint32_t e = get_u32(bytes, 8 + 4 * i);
    if (e == 0) {
      throw FormatError(FormatError::Kind::kDimOverflow,
                        "fcube: dimension " + std::to_string(i) + " is zero");
    }
    count *= e;
    if (count > kMaxCubeElements) {
      throw FormatError(FormatError::Kind::kDimOverflow,
                        "fcube: dims exceed " + std::to_string(kMaxCubeElements) + " elements");
    }
    ext[i] = e;
  }
  const std::size_t need = 24 + 4 * static_cast<std::size_t>(count);
  if (bytes.size() != need) {
    throw FormatError(FormatError::Kind::kTruncated,
                      "fcube: payload has " + std::to_string(bytes.size() - 24) +
                          " bytes, dims imply " + std::to_string(4 * count));
  }
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, 24 + 4 * i));
    if (!std::isfinite(values[i])) {
      throw FormatError(FormatError::Kind::kNonFinite,
                        "fcube: non-finite value at element " + std::to_string(i));
    }
  }
  return FeatureCube(CubeDims{ext[0], ext[1], ext[2], ext[3]}, std::move(values));
}

void store_fcube(const std::filesystem::path& path, const FeatureCube& cube) {
  const auto bytes = encode_fcube(cube);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

FeatureCube load_fcube(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_fcube(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace mastaf
