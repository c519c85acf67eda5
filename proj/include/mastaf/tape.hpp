#pragma once

// Reverse-mode differentiation graph.
//
// A Tape owns every array produced while evaluating a model on one episode.
// Operations append nodes in evaluation order, so the node list is already a
// topological order and backward() walks it once in reverse. Var is a cheap
// handle (tape pointer + node index) into that list.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mastaf/errors.hpp"
#include "mastaf/shape.hpp"

namespace mastaf {

// Pipeline stage a multiply-accumulate is attributed to.
enum class Stage : std::uint8_t { kEmbed = 0, kSelfAttention, kCrossAttention, kFusion, kLoss };
inline constexpr std::size_t kStageCount = 5;

struct MacCounter {
  std::array<std::uint64_t, kStageCount> by_stage{};

  std::uint64_t operator[](Stage s) const { return by_stage[static_cast<std::size_t>(s)]; }
  void add(Stage s, std::uint64_t n) { by_stage[static_cast<std::size_t>(s)] += n; }
};

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Shape& shape() const { return tape_->node(id_).shape; }
  std::size_t numel() const { return shape().numel(); }
  std::span<const T> value() const { return tape_->node(id_).value; }
  // Empty until backward() has run on a graph this node is part of.
  std::span<const T> grad() const { return tape_->node(id_).grad; }
  bool requires_grad() const { return tape_->node(id_).requires_grad; }

  T item() const {
    if (numel() != 1) {
      throw DimensionError("item() on non-scalar array of shape " + shape().to_string());
    }
    return value()[0];
  }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Shape shape, std::vector<T> values) {
    return push("constant", std::move(shape), std::move(values), {}, nullptr, false);
  }

  // Differentiable input (a parameter or a cube under a gradient check).
  Var<T> leaf(Shape shape, std::vector<T> values) {
    return push("leaf", std::move(shape), std::move(values), {}, nullptr, true);
  }

  // Appends the result of an operation. The backward rule is only kept when
  // some input requires a gradient.
  Var<T> record(const char* op, Shape shape, std::vector<T> values,
                std::initializer_list<Var<T>> inputs, BackwardFn backward, std::uint64_t macs) {
    return record(op, std::move(shape), std::move(values), std::vector<Var<T>>(inputs),
                  std::move(backward), macs);
  }

  Var<T> record(const char* op, Shape shape, std::vector<T> values, const std::vector<Var<T>>& inputs,
                BackwardFn backward, std::uint64_t macs) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const auto& v : inputs) {
      if (&v.tape() != this) {
        throw GraphError(std::string("operation '") + op + "' mixes arrays from different graphs");
      }
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    macs_.add(stage_, macs);
    return push(op, std::move(shape), std::move(values), std::move(ids),
                needs ? std::move(backward) : nullptr, needs);
  }

  // Populates grad on every node that requires one. Gradients accumulate into
  // zeroed buffers; a second call needs zero_grad() first.
  void backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw GraphError("backward on an array from another graph");
    const Node& root = nodes_[loss.id()];
    if (root.shape.numel() != 1) {
      throw GraphError("backward needs a scalar loss, got shape " + root.shape.to_string());
    }
    if (!root.requires_grad) throw GraphError("backward on a constant");
    if (backward_done_) throw GraphError("backward called twice without zero_grad()");
    for (auto& n : nodes_) {
      if (n.requires_grad && n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
    }
    nodes_[loss.id()].grad[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward) continue;
      if (!fault_op_.empty() && fault_op_ == n.op) {
        for (auto& g : n.grad) g *= fault_factor_;
      }
      n.backward(*this, i);
    }
    backward_done_ = true;
  }

  void zero_grad() {
    for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), T(0));
    backward_done_ = false;
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // For backward rules: the gradient buffer of an input, or an empty span when
  // that input does not take part in differentiation.
  std::span<T> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    return n.grad;
  }

  Stage stage() const noexcept { return stage_; }
  void set_stage(Stage s) noexcept { stage_ = s; }
  const MacCounter& macs() const noexcept { return macs_; }

  // Probability floors hit inside logarithms (see ops::neg_log_prob).
  void note_clamped_log() noexcept { ++clamped_logs_; }
  std::size_t clamped_logs() const noexcept { return clamped_logs_; }

  // Test hook: scales the upstream gradient of every `op` node by `factor`
  // before its rule runs, corrupting that rule.
  void inject_fault(std::string op, T factor) {
    fault_op_ = std::move(op);
    fault_factor_ = factor;
  }

 private:
  Var<T> push(const char* op, Shape shape, std::vector<T> values, std::vector<std::size_t> inputs,
              BackwardFn backward, bool requires_grad) {
    if (values.size() != shape.numel()) {
      throw DimensionError(std::string(op) + ": " + std::to_string(values.size()) +
                           " values for shape " + shape.to_string());
    }
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  Stage stage_ = Stage::kLoss;
  MacCounter macs_;
  std::size_t clamped_logs_ = 0;
  bool backward_done_ = false;
  std::string fault_op_;
  T fault_factor_ = T(1);
};

// Attributes MACs recorded in its lifetime to one stage.
template <typename T>
class StageScope {
 public:
  StageScope(Tape<T>& tape, Stage s) : tape_(tape), saved_(tape.stage()) { tape_.set_stage(s); }
  ~StageScope() { tape_.set_stage(saved_); }
  StageScope(const StageScope&) = delete;
  StageScope& operator=(const StageScope&) = delete;

 private:
  Tape<T>& tape_;
  Stage saved_;
};

}  // namespace mastaf
