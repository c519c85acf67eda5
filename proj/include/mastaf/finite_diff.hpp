#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mastaf {

// Central differences (f(p + eps e_i) - f(p - eps e_i)) / 2 eps per coordinate.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> params, double eps) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = f(params);
    params[i] = saved - eps;
    const double down = f(params);
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace mastaf
