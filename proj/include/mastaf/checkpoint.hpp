#pragma once

// Checkpoint file:
//   bytes 0..3  magic "MCK1"
//   u32         header length in bytes (little-endian)
//   header      JSON: format, version, fingerprint, config, params [{name, shape}]
//   payload     f32 little-endian values of every parameter, in header order

#include <cstdint>
#include <filesystem>
#include <string>

#include "mastaf/model.hpp"
#include "mastaf/params.hpp"

namespace mastaf {

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// FNV-1a 64 of the canonical config JSON, as 16 hex digits.
std::string config_fingerprint(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  ParamSet params;
  std::uint64_t version = 0;
  std::string fingerprint;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamSet& params, std::uint64_t version);

// Throws CheckpointError on a malformed file or a parameter layout that does
// not match the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mastaf
