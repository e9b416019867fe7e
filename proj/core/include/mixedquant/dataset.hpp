#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mixedquant/tensor.hpp"

namespace mixedquant {

/// Samples of one common shape with class labels below `class_count`.
class LabeledSet {
 public:
  LabeledSet(Shape sample_shape, std::size_t class_count, std::vector<Tensor> samples,
             std::vector<std::uint32_t> labels);

  const Shape& sample_shape() const noexcept { return sample_shape_; }
  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<Tensor>& samples() const noexcept { return samples_; }
  const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }

  friend bool operator==(const LabeledSet&, const LabeledSet&) = default;

 private:
  Shape sample_shape_;
  std::size_t class_count_;
  std::vector<Tensor> samples_;
  std::vector<std::uint32_t> labels_;
};

}  // namespace mixedquant
