#include "mastaf/fusion.hpp"

#include <cmath>

namespace mastaf {

void FusionConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda must be a finite value >= 0, got " + std::to_string(lambda));
  }
  if (num_global_classes < 1) throw ConfigError("the global head needs at least one class");
}

Shape FusionConfig::weight_shape(const CubeDims& dims) const {
  return Shape{global_pool ? dims.channels : dims.numel(), num_global_classes};
}

}  // namespace mastaf
