#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mastaf/errors.hpp"
#include "mastaf/shape.hpp"

namespace mastaf {

template <typename T>
struct ParamTensor {
  std::string name;
  Shape shape;
  std::vector<T> value;
};

// Ordered, named parameter tensors. Order is the binding order of the model.
template <typename T>
class ParamSetT {
 public:
  void add(std::string name, Shape shape, std::vector<T> value) {
    if (value.size() != shape.numel()) {
      throw DimensionError("parameter " + name + ": " + std::to_string(value.size()) +
                           " values for shape " + shape.to_string());
    }
    for (const auto& t : tensors_) {
      if (t.name == name) throw ConfigError("duplicate parameter name " + name);
    }
    tensors_.push_back(ParamTensor<T>{std::move(name), std::move(shape), std::move(value)});
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  ParamTensor<T>& operator[](std::size_t i) { return tensors_.at(i); }
  const ParamTensor<T>& operator[](std::size_t i) const { return tensors_.at(i); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name == name) return i;
    }
    throw ConfigError("no parameter named " + name);
  }
  bool contains(const std::string& name) const {
    for (const auto& t : tensors_) {
      if (t.name == name) return true;
    }
    return false;
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
  }

  template <typename U>
  ParamSetT<U> cast() const {
    ParamSetT<U> out;
    for (const auto& t : tensors_) {
      out.add(t.name, t.shape, std::vector<U>(t.value.begin(), t.value.end()));
    }
    return out;
  }

  // Same names and shapes, in the same order.
  template <typename U>
  bool same_layout(const ParamSetT<U>& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (tensors_[i].name != other[i].name || !(tensors_[i].shape == other[i].shape)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<ParamTensor<T>> tensors_;
};

using ParamSet = ParamSetT<float>;

// Gradients laid out like a ParamSet.
using GradSet = std::vector<std::vector<float>>;

// Training-time parameters with their gradient and momentum buffers.
class ParameterStore {
 public:
  explicit ParameterStore(ParamSet params);

  const ParamSet& params() const noexcept { return params_; }
  const GradSet& grads() const noexcept { return grads_; }
  // Number of optimizer steps applied so far.
  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }

  void zero_grad();
  // grads += scale * g, tensor by tensor.
  void accumulate(const GradSet& g, float scale);
  // v = momentum * v + grad;  w -= lr * v;  version += 1.
  void sgd_step(float learning_rate, float momentum);

 private:
  ParamSet params_;
  GradSet grads_;
  GradSet velocity_;
  std::uint64_t version_ = 0;
};

}  // namespace mastaf
