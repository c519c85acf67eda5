#include "mastaf/attention.hpp"

#include <cmath>

namespace mastaf {

void AttentionConfig::validate(std::size_t positions) const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("attention: tau must be positive, got " + std::to_string(tau));
  }
  if (meta_learner && (meta_dim < 1 || meta_dim >= positions)) {
    throw ConfigError("attention: meta_dim must satisfy 1 <= l < L (l=" +
                      std::to_string(meta_dim) + ", L=" + std::to_string(positions) + ")");
  }
}

std::vector<AttentionParamShape> attention_parameter_shapes(const std::string& prefix,
                                                            const AttentionConfig& cfg,
                                                            std::size_t positions) {
  std::vector<AttentionParamShape> out;
  if (!cfg.meta_learner) return out;
  const std::size_t l = cfg.meta_dim;
  out.push_back({prefix + ".w_delta", Shape{positions, l}});
  if (cfg.bias) out.push_back({prefix + ".b_delta", Shape{l}});
  out.push_back({prefix + ".w_gamma", Shape{l, positions}});
  if (cfg.bias) out.push_back({prefix + ".b_gamma", Shape{positions}});
  return out;
}

std::vector<std::vector<float>> init_attention_params(const AttentionConfig& cfg,
                                                      std::size_t positions,
                                                      std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(positions));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<std::vector<float>> out;
  for (const auto& p : attention_parameter_shapes("", cfg, positions)) {
    std::vector<float> v(p.shape.numel(), 0.0f);
    if (p.shape.rank() == 2) {
      for (auto& x : v) x = static_cast<float>(u(rng));
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::uint64_t attention_macs(const CubeDims& dims, const AttentionConfig& cfg) {
  const std::uint64_t c = dims.channels;
  const std::uint64_t L = dims.positions();
  const std::uint64_t l = cfg.meta_dim;
  std::uint64_t total = c * L * L;  // relation map
  if (cfg.meta_learner) {
    total += L * L;      // row mean
    total += 2 * L * l;  // f_delta, f_gamma
  }
  total += L * L;  // scores d . M_i
  total += c * L;  // residual re-weighting
  return total;
}

}  // namespace mastaf
