#pragma once

// Layer graph of a small feed-forward CNN and its full-precision forward pass.
//
// Activations are CHW tensors without a batch dimension. Convolution weights
// are [out_channels, in_channels, kernel_h, kernel_w]; fully-connected
// weights are [out_features, in_features] and consume their input flattened
// in row-major order. Padding is zero padding. Inner products run over
// (in_channel, ky, kx) in row-major order, matching the weight layout.

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mixedquant/quantizer.hpp"
#include "mixedquant/tensor.hpp"

namespace mixedquant {

struct Conv2d {
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct FullyConnected {
  std::size_t out_features = 1;
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};

struct MaxPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct AvgPool {
  std::size_t window = 2;
  std::size_t stride = 2;
  friend bool operator==(const AvgPool&, const AvgPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using LayerKind = std::variant<Conv2d, FullyConnected, Relu, MaxPool, AvgPool, Flatten>;

const char* kind_name(const LayerKind& kind) noexcept;

struct Layer {
  std::string name;
  LayerKind kind;
  std::optional<Tensor> weights;
  std::optional<Tensor> bias;
  /// Stored quantized weights (set when loaded from a quantized model);
  /// `weights` then holds their dequantized values.
  std::optional<QTensor> quantized;

  bool has_weights() const noexcept {
    return std::holds_alternative<Conv2d>(kind) || std::holds_alternative<FullyConnected>(kind);
  }
  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Validated layer sequence. Construction checks that every layer's shape
/// composes with its input and that at least one conv/fc layer exists;
/// errors are ShapeError naming the offending layer.
class Model {
 public:
  Model(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }

  /// Input shape of layer i; shape_at(size()) is the output shape.
  const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }
  const Shape& output_shape() const noexcept { return shapes_.back(); }

  /// Number of products per output of a conv/fc layer.
  std::size_t fan_in(std::size_t layer) const;

  /// Layers [begin, end) as a model of their own. The slice must contain a
  /// conv or fc layer.
  Model slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const Model&, const Model&) = default;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Output shape of `layer` applied to `input`; throws ShapeError.
Shape infer_output_shape(const Layer& layer, const Shape& input);

/// For each output position of a convolution, the flat input index feeding
/// each weight in (in_channel, ky, kx) order, or -1 for a padded position.
/// Entry [pos * patch + k].
struct ConvPatchTable {
  std::size_t positions = 0;
  std::size_t patch = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::vector<std::ptrdiff_t> index;
};
ConvPatchTable conv_patch_table(const Conv2d& conv, const Shape& input);

/// Full-precision (double) forward pass; returns the logits.
Tensor forward_reference(const Model& model, const Tensor& input);

/// Input of every layer followed by the final output (size() + 1 tensors).
std::vector<Tensor> forward_reference_trace(const Model& model, const Tensor& input);

/// Index of the largest element; the lowest index wins ties.
std::size_t argmax(std::span<const double> values);

}  // namespace mixedquant
