#include "mixedquant/tensor.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mixedquant/error.hpp"

namespace mixedquant {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw ShapeError(fmt::format("shape {} needs {} elements, got {}", to_string(shape_),
                                 element_count(shape_), data_.size()));
  }
  for (const double v : data_) {
    if (!std::isfinite(v)) throw DomainError("tensor values must be finite");
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

}  // namespace mixedquant
