#pragma once

// Gaussian-cluster feature-cube datasets: each class has a random centre cube
// and every sample is centre + isotropic noise.

#include <cstdint>
#include <filesystem>
#include <string>

#include "mastaf/fcube.hpp"
#include "mastaf/manifest.hpp"

namespace mastaf {

struct SyntheticConfig {
  std::size_t train_classes = 20;
  std::size_t val_classes = 5;
  std::size_t test_classes = 5;
  std::size_t samples_per_class = 20;
  CubeDims dims{8, 2, 2, 2};
  double center_scale = 1.0;
  double noise_std = 0.5;
  std::uint64_t seed = 42;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);

// In-memory split; sample ids are the relative paths the on-disk form uses.
// Class ids: train 0..Ntr-1, val next, test after, so splits are disjoint.
Dataset synthesize_split(const SyntheticConfig& config, Split split);

struct SyntheticPaths {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};

// Writes <out>/<split>/manifest.json and <out>/<split>/class_XXX/sample_YYY.fcube.
SyntheticPaths generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out);

}  // namespace mastaf
