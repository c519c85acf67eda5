#include "mastaf/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "mastaf/episodes.hpp"
#include "mastaf/errors.hpp"

namespace mastaf {
namespace {

std::vector<float> gaussian_cube(std::size_t n, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(scale * normal(rng));
  return v;
}

std::string padded(std::size_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", v);
  return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
    throw ConfigError("noise std must be >= 0, got " + std::to_string(noise_std));
  }
  if (!(center_scale >= 0.0) || !std::isfinite(center_scale)) {
    throw ConfigError("center scale must be >= 0");
  }
  if (dims.channels == 0 || dims.frames == 0 || dims.height == 0 || dims.width == 0) {
    throw ConfigError("cube dims must be positive");
  }
  if (samples_per_class == 0) throw ConfigError("samples per class must be >= 1");
  if (train_classes + val_classes + test_classes == 0) throw ConfigError("no classes requested");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Dataset synthesize_split(const SyntheticConfig& config, Split split) {
  config.validate();
  std::size_t first = 0, count = config.train_classes;
  if (split == Split::kVal) {
    first = config.train_classes;
    count = config.val_classes;
  } else if (split == Split::kTest) {
    first = config.train_classes + config.val_classes;
    count = config.test_classes;
  }
  Dataset ds;
  ds.manifest.split = split_name(split);
  ds.manifest.dims = config.dims;
  const std::size_t n = config.dims.numel();
  for (std::size_t c = first; c < first + count; ++c) {
    ClassEntry entry;
    entry.id = static_cast<int>(c);
    entry.name = "class_" + padded(c);
    const auto center = gaussian_cube(n, config.center_scale, mix_seed(config.seed, c, 0));
    std::vector<VideoSample> samples;
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      auto v = gaussian_cube(n, config.noise_std, mix_seed(config.seed, c, s + 1));
      for (std::size_t i = 0; i < n; ++i) v[i] += center[i];
      const std::string rel = entry.name + "/sample_" + padded(s) + ".fcube";
      entry.samples.push_back(rel);
      samples.push_back(VideoSample{rel, -1, entry.id, FeatureCube(config.dims, std::move(v))});
    }
    ds.manifest.classes.push_back(std::move(entry));
    ds.samples.push_back(std::move(samples));
  }
  return ds;
}

SyntheticPaths generate_synthetic(const SyntheticConfig& config,
                                  const std::filesystem::path& out) {
  config.validate();
  SyntheticPaths paths;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    auto ds = synthesize_split(config, split);
    const auto dir = out / split_name(split);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t c = 0; c < ds.num_classes(); ++c) {
      std::filesystem::create_directories(dir / ds.manifest.classes[c].name, ec);
      if (ec) throw IoError("cannot create class directory under " + dir.string());
      for (const auto& s : ds.samples[c]) {
        store_fcube(dir / s.id, std::get<FeatureCube>(s.payload));
      }
    }
    ds.manifest.root = dir;
    save_manifest(dir / "manifest.json", ds.manifest);
    const auto mpath = dir / "manifest.json";
    if (split == Split::kTrain) paths.train = mpath;
    if (split == Split::kVal) paths.val = mpath;
    if (split == Split::kTest) paths.test = mpath;
  }
  return paths;
}

}  // namespace mastaf
