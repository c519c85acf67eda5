#pragma once

// Analytic gradients of the training loss against central finite differences,
// in double precision, on one small episode with the toy embedder.

#include <cstdint>
#include <string>
#include <vector>

#include "mastaf/model.hpp"

namespace mastaf {

struct GradcheckConfig {
  ModelConfig model;
  EpisodeSpec episode{2, 1, 1};
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so near-zero gradients compare
  // absolutely.
  double floor = 1e-7;
  // Test hook: scale the upstream gradient of every node of this op.
  std::string corrupt_op;
  double corrupt_factor = 1.0;

  // C'=4, T'=2, H'=W'=2 from a 4-frame 2x4x4 toy conv3d stack; Z=3.
  static GradcheckConfig small();
};

struct ParamCheck {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
};

struct GradcheckReport {
  bool passed = false;
  double worst_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Elements whose stencil straddled a ReLU kink: they failed at epsilon but
  // agreed at a smaller step.
  std::size_t kink_retries = 0;
  double loss = 0.0;
  double seconds = 0.0;
  std::vector<ParamCheck> params;

  std::string to_json() const;
};

double relative_error(double analytic, double numeric, double floor);

GradcheckReport gradcheck(const GradcheckConfig& config, std::uint64_t seed);

}  // namespace mastaf
