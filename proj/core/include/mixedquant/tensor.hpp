#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mixedquant {

using Shape = std::vector<std::size_t>;

/// Number of elements of a shape; throws ShapeError on a zero dimension.
std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major real tensor. Values are finite; the element count equals
/// the product of the dimensions.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rank() const noexcept { return shape_.size(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace mixedquant
