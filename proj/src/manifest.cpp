#include "mastaf/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mastaf/errors.hpp"

namespace mastaf {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& what) {
  throw ManifestError(ManifestError::Kind::kSchema, "manifest: " + what);
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["split"] = m.split;
  j["dims"] = {m.dims.channels, m.dims.frames, m.dims.height, m.dims.width};
  j["classes"] = json::array();
  for (const auto& c : m.classes) {
    j["classes"].push_back({{"id", c.id}, {"name", c.name}, {"samples", c.samples}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    schema_error(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) schema_error("top level must be an object");
  for (const char* key : {"split", "dims", "classes"}) {
    if (!j.contains(key)) schema_error(std::string("missing key \"") + key + "\"");
  }
  DatasetManifest m;
  m.root = root;
  if (!j["split"].is_string()) schema_error("\"split\" must be a string");
  m.split = j["split"].get<std::string>();
  const auto& dims = j["dims"];
  if (!dims.is_array() || dims.size() != 4) schema_error("\"dims\" must be an array of 4 extents");
  std::size_t ext[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!dims[i].is_number_unsigned() || dims[i].get<std::size_t>() == 0) {
      schema_error("\"dims\" entries must be positive integers");
    }
    ext[i] = dims[i].get<std::size_t>();
  }
  m.dims = CubeDims{ext[0], ext[1], ext[2], ext[3]};
  if (!j["classes"].is_array()) schema_error("\"classes\" must be an array");
  std::set<int> seen;
  for (const auto& c : j["classes"]) {
    if (!c.is_object() || !c.contains("id") || !c.contains("name") || !c.contains("samples")) {
      schema_error("each class needs \"id\", \"name\" and \"samples\"");
    }
    if (!c["id"].is_number_integer()) schema_error("class \"id\" must be an integer");
    if (!c["name"].is_string()) schema_error("class \"name\" must be a string");
    if (!c["samples"].is_array()) schema_error("class \"samples\" must be an array");
    ClassEntry e;
    e.id = c["id"].get<int>();
    e.name = c["name"].get<std::string>();
    for (const auto& s : c["samples"]) {
      if (!s.is_string()) schema_error("sample paths must be strings");
      e.samples.push_back(s.get<std::string>());
    }
    if (!seen.insert(e.id).second) {
      schema_error("duplicate class id " + std::to_string(e.id));
    }
    m.classes.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  auto m = manifest_from_json(ss.str(), path.parent_path());
  for (const auto& c : m.classes) {
    for (const auto& s : c.samples) {
      if (!std::filesystem::is_regular_file(m.resolve(s))) {
        throw ManifestError(ManifestError::Kind::kDanglingPath,
                            "manifest: sample path does not exist: " + m.resolve(s).string());
      }
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest " + path.string());
  f << manifest_to_json(manifest);
  if (!f) throw IoError("write failed: " + path.string());
}

void check_disjoint(std::span<const DatasetManifest> splits) {
  for (std::size_t a = 0; a < splits.size(); ++a) {
    for (std::size_t b = a + 1; b < splits.size(); ++b) {
      for (const auto& ca : splits[a].classes) {
        for (const auto& cb : splits[b].classes) {
          if (ca.id == cb.id) {
            throw ManifestError(ManifestError::Kind::kSplitOverlap,
                                "manifest: class id " + std::to_string(ca.id) +
                                    " appears in splits \"" + splits[a].split + "\" and \"" +
                                    splits[b].split + "\"");
          }
        }
      }
    }
  }
}

Dataset load_dataset(const DatasetManifest& manifest) {
  Dataset ds;
  ds.manifest = manifest;
  for (const auto& c : manifest.classes) {
    std::vector<VideoSample> samples;
    for (const auto& s : c.samples) {
      auto cube = load_fcube(manifest.resolve(s));
      if (!(cube.dims() == manifest.dims)) {
        throw DimensionError("sample " + s + " has dims " + cube.dims().shape().to_string() +
                             ", manifest declares " + manifest.dims.shape().to_string());
      }
      samples.push_back(VideoSample{s, -1, c.id, std::move(cube)});
    }
    ds.samples.push_back(std::move(samples));
  }
  return ds;
}

}  // namespace mastaf
