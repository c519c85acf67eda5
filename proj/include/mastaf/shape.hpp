#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace mastaf {

// Ordered list of positive extents, row-major (last dimension fastest).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  // Product of extents.
  std::size_t numel() const noexcept { return numel_; }
  bool is_scalar() const noexcept { return numel_ == 1; }

  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

 private:
  void validate();

  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

}  // namespace mastaf
