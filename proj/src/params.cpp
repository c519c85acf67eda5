#include "mastaf/params.hpp"

#include <algorithm>

namespace mastaf {

ParameterStore::ParameterStore(ParamSet params) : params_(std::move(params)) {
  for (const auto& t : params_) {
    grads_.emplace_back(t.value.size(), 0.0f);
    velocity_.emplace_back(t.value.size(), 0.0f);
  }
}

void ParameterStore::zero_grad() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0f);
}

void ParameterStore::accumulate(const GradSet& g, float scale) {
  if (g.size() != grads_.size()) throw DimensionError("gradient set does not match parameters");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].size() != grads_[i].size()) {
      throw DimensionError("gradient for " + params_[i].name + " has the wrong size");
    }
    for (std::size_t j = 0; j < g[i].size(); ++j) grads_[i][j] += scale * g[i][j];
  }
}

void ParameterStore::sgd_step(float learning_rate, float momentum) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& w = params_[i].value;
    auto& v = velocity_[i];
    const auto& g = grads_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum * v[j] + g[j];
      w[j] -= learning_rate * v[j];
    }
  }
  ++version_;
}

}  // namespace mastaf
