#include "mastaf/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <fmt/core.h>
#include <json.hpp>

namespace mastaf {
namespace {

using nlohmann::json;

json dims_json(const CubeDims& d) { return {d.channels, d.frames, d.height, d.width}; }

CubeDims dims_from(const json& j) {
  return CubeDims{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(),
                  j.at(2).get<std::size_t>(), j.at(3).get<std::size_t>()};
}

json to_json(const ModelConfig& c) {
  json e;
  e["kind"] = c.embedder.kind == EmbedderSpec::Kind::kPrecomputed ? "precomputed" : "toy-conv3d";
  e["output"] = dims_json(c.embedder.output);
  if (c.embedder.kind == EmbedderSpec::Kind::kToyConv3d) {
    const auto& t = c.embedder.toy;
    e["input"] = {t.frames, t.in_channels, t.height, t.width};
    e["blocks"] = json::array();
    for (const auto& b : t.blocks) {
      e["blocks"].push_back({{"out_channels", b.out_channels},
                             {"kernel", b.kernel},
                             {"pool", {b.pool_t, b.pool_h, b.pool_w}}});
    }
  }
  json j;
  j["embedder"] = e;
  j["attention"] = {{"tau", c.attention.tau},
                    {"meta_dim", c.attention.meta_dim},
                    {"bias", c.attention.bias},
                    {"meta_learner", c.attention.meta_learner},
                    {"residual", c.attention.residual}};
  j["share_cross_directions"] = c.share_cross_directions;
  j["fusion"] = {{"lambda", c.fusion.lambda},
                 {"num_global_classes", c.fusion.num_global_classes},
                 {"global_pool", c.fusion.global_pool}};
  j["variant"] = variant_name(c.variant);
  return j;
}

ModelConfig from_json(const json& j) {
  ModelConfig c;
  const auto& e = j.at("embedder");
  if (e.at("kind").get<std::string>() == "precomputed") {
    c.embedder = EmbedderSpec::precomputed(dims_from(e.at("output")));
  } else {
    ToyConvSpec t;
    const auto& in = e.at("input");
    t.frames = in.at(0).get<std::size_t>();
    t.in_channels = in.at(1).get<std::size_t>();
    t.height = in.at(2).get<std::size_t>();
    t.width = in.at(3).get<std::size_t>();
    t.blocks.clear();
    for (const auto& b : e.at("blocks")) {
      t.blocks.push_back(ConvBlock{b.at("out_channels").get<std::size_t>(),
                                   b.at("kernel").get<std::size_t>(),
                                   b.at("pool").at(0).get<std::size_t>(),
                                   b.at("pool").at(1).get<std::size_t>(),
                                   b.at("pool").at(2).get<std::size_t>()});
    }
    c.embedder = EmbedderSpec::toy_conv3d(std::move(t));
    c.embedder.output = dims_from(e.at("output"));
  }
  const auto& a = j.at("attention");
  c.attention.tau = a.at("tau").get<double>();
  c.attention.meta_dim = a.at("meta_dim").get<std::size_t>();
  c.attention.bias = a.at("bias").get<bool>();
  c.attention.meta_learner = a.at("meta_learner").get<bool>();
  c.attention.residual = a.at("residual").get<bool>();
  c.share_cross_directions = j.at("share_cross_directions").get<bool>();
  const auto& f = j.at("fusion");
  c.fusion.lambda = f.at("lambda").get<double>();
  c.fusion.num_global_classes = f.at("num_global_classes").get<std::size_t>();
  c.fusion.global_pool = f.at("global_pool").get<bool>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

constexpr char kMagic[4] = {'M', 'C', 'K', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return to_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

std::string config_fingerprint(const ModelConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : model_config_to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamSet& params, std::uint64_t version) {
  if (!init_parameters(config, 0).same_layout(params)) {
    throw CheckpointError("checkpoint: parameters do not match the model config");
  }
  json header;
  header["format"] = "mastaf-checkpoint";
  header["version"] = version;
  header["fingerprint"] = config_fingerprint(config);
  header["config"] = to_json(config);
  header["params"] = json::array();
  for (const auto& p : params) header["params"].push_back({{"name", p.name}, {"shape", p.shape.dims()}});
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  for (const auto& p : params) {
    for (float v : p.value) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t hlen = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(hlen)) {
    throw CheckpointError("checkpoint: truncated header");
  }
  Checkpoint ck;
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
    ck.config = from_json(header.at("config"));
    ck.version = header.at("version").get<std::uint64_t>();
    ck.fingerprint = header.at("fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad config: ") + e.what());
  }
  if (ck.fingerprint != config_fingerprint(ck.config)) {
    throw CheckpointError("checkpoint: config fingerprint mismatch");
  }
  std::size_t off = 8 + hlen;
  try {
    for (const auto& p : header.at("params")) {
      const Shape shape(p.at("shape").get<std::vector<std::size_t>>());
      if ((bytes.size() - off) / 4 < shape.numel()) {
        throw CheckpointError("checkpoint: truncated payload");
      }
      std::vector<float> v(shape.numel());
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::bit_cast<float>(get_u32(bytes, off + 4 * i));
      }
      off += 4 * v.size();
      ck.params.add(p.at("name").get<std::string>(), shape, std::move(v));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad parameter table: ") + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError(std::string("checkpoint: bad parameter table: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint: bad parameter table: ") + e.what());
  }
  if (off != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after payload");
  const auto expected = init_parameters(ck.config, 0);
  if (!expected.same_layout(ck.params)) {
    throw CheckpointError("checkpoint: parameters do not match the stored model config");
  }
  return ck;
}

}  // namespace mastaf
