#pragma once

// Dataset manifests:
//   { "split": str, "dims": [C', T', H', W'],
//     "classes": [ { "id": int, "name": str, "samples": [relative .fcube paths] } ] }
// Sample paths are relative to the manifest's directory.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mastaf/embedding.hpp"
#include "mastaf/fcube.hpp"

namespace mastaf {

struct ClassEntry {
  int id = 0;
  std::string name;
  std::vector<std::string> samples;
};

struct DatasetManifest {
  std::string split;
  CubeDims dims;
  std::vector<ClassEntry> classes;
  // Directory the sample paths resolve against.
  std::filesystem::path root;

  std::filesystem::path resolve(const std::string& sample) const { return root / sample; }
};

// Parses and validates a manifest: schema, unique class ids, every sample path
// present on disk.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root);

// Throws ManifestError(kSplitOverlap) if any class id appears in two splits.
void check_disjoint(std::span<const DatasetManifest> splits);

// A manifest with its cubes loaded. Immutable once built.
struct Dataset {
  DatasetManifest manifest;
  // samples[class position][sample]
  std::vector<std::vector<VideoSample>> samples;

  std::size_t num_classes() const noexcept { return samples.size(); }
};

Dataset load_dataset(const DatasetManifest& manifest);

}  // namespace mastaf
