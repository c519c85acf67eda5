#include "mastaf/shape.hpp"

#include <limits>

#include "mastaf/errors.hpp"

namespace mastaf {

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

void Shape::validate() {
  if (dims_.empty()) {
    throw DimensionError("shape must have at least one dimension");
  }
  std::size_t n = 1;
  for (std::size_t d : dims_) {
    if (d == 0) {
      throw DimensionError("shape " + to_string() + " has a zero extent");
    }
    if (n > std::numeric_limits<std::size_t>::max() / d) {
      throw DimensionError("shape " + to_string() + " overflows the element count");
    }
    n *= d;
  }
  numel_ = n;
}

std::string Shape::to_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

}  // namespace mastaf
