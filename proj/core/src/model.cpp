#include "mixedquant/model.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "mixedquant/error.hpp"

namespace mixedquant {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void shape_fail(const Layer& layer, const std::string& why) {
  throw ShapeError(fmt::format("layer '{}' ({}): {}", layer.name, kind_name(layer.kind), why));
}

void expect_tensor(const Layer& layer, const std::optional<Tensor>& t, const Shape& want,
                   const char* what) {
  if (!t) shape_fail(layer, fmt::format("missing {}", what));
  if (t->shape() != want) {
    shape_fail(layer, fmt::format("{} shape {} does not match expected {}", what,
                                  to_string(t->shape()), to_string(want)));
  }
}

std::size_t pooled(const Layer& layer, std::size_t extent, std::size_t window, std::size_t stride) {
  if (window < 1 || stride < 1) shape_fail(layer, "pooling window and stride must be >= 1");
  if (extent < window) {
    shape_fail(layer, fmt::format("window {} larger than input extent {}", window, extent));
  }
  return (extent - window) / stride + 1;
}

Shape pool_shape(const Layer& layer, const Shape& in, std::size_t window, std::size_t stride) {
  if (in.size() != 3) shape_fail(layer, "pooling expects a CHW input, got " + to_string(in));
  return {in[0], pooled(layer, in[1], window, stride), pooled(layer, in[2], window, stride)};
}

}  // namespace

const char* kind_name(const LayerKind& kind) noexcept {
  return std::visit(Overloaded{[](const Conv2d&) { return "conv2d"; },
                               [](const FullyConnected&) { return "fc"; },
                               [](const Relu&) { return "relu"; },
                               [](const MaxPool&) { return "maxpool"; },
                               [](const AvgPool&) { return "avgpool"; },
                               [](const Flatten&) { return "flatten"; }},
                    kind);
}

Shape infer_output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) -> Shape {
            if (in.size() != 3) shape_fail(layer, "conv2d expects a CHW input, got " + to_string(in));
            if (c.out_channels < 1 || c.kernel_h < 1 || c.kernel_w < 1 || c.stride < 1) {
              shape_fail(layer, "conv2d dimensions and stride must be >= 1");
            }
            expect_tensor(layer, layer.weights, {c.out_channels, in[0], c.kernel_h, c.kernel_w},
                          "weights");
            if (layer.bias) expect_tensor(layer, layer.bias, {c.out_channels}, "bias");
            const std::size_t h = in[1] + 2 * c.pad;
            const std::size_t w = in[2] + 2 * c.pad;
            if (h < c.kernel_h || w < c.kernel_w) shape_fail(layer, "kernel larger than padded input");
            return {c.out_channels, (h - c.kernel_h) / c.stride + 1, (w - c.kernel_w) / c.stride + 1};
          },
          [&](const FullyConnected& f) -> Shape {
            if (f.out_features < 1) shape_fail(layer, "fc needs at least one output");
            expect_tensor(layer, layer.weights, {f.out_features, element_count(in)}, "weights");
            if (layer.bias) expect_tensor(layer, layer.bias, {f.out_features}, "bias");
            return {f.out_features};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const MaxPool& p) -> Shape { return pool_shape(layer, in, p.window, p.stride); },
          [&](const AvgPool& p) -> Shape { return pool_shape(layer, in, p.window, p.stride); },
          [&](const Flatten&) -> Shape { return {element_count(in)}; }},
      layer.kind);
}

Model::Model(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  element_count(input_shape_);
  shapes_.reserve(layers_.size() + 1);
  shapes_.push_back(input_shape_);
  bool has_compute = false;
  for (const Layer& layer : layers_) {
    if (!layer.has_weights() && (layer.weights || layer.bias)) {
      shape_fail(layer, "only conv2d and fc layers carry weights");
    }
    has_compute = has_compute || layer.has_weights();
    shapes_.push_back(infer_output_shape(layer, shapes_.back()));
  }
  if (!has_compute) throw ShapeError("model needs at least one conv2d or fc layer");
}

std::size_t Model::fan_in(std::size_t i) const {
  const Layer& layer = layers_.at(i);
  if (!layer.has_weights()) shape_fail(layer, "layer has no inner products");
  const Shape& w = layer.weights->shape();
  return element_count(w) / w[0];
}

Model Model::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > layers_.size()) {
    throw ShapeError(fmt::format("invalid layer slice [{}, {}) of {}", begin, end, layers_.size()));
  }
  return Model(shapes_[begin], std::vector<Layer>(layers_.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  layers_.begin() + static_cast<std::ptrdiff_t>(end)));
}

ConvPatchTable conv_patch_table(const Conv2d& c, const Shape& in) {
  ConvPatchTable t;
  const std::size_t channels = in[0], height = in[1], width = in[2];
  t.out_h = (height + 2 * c.pad - c.kernel_h) / c.stride + 1;
  t.out_w = (width + 2 * c.pad - c.kernel_w) / c.stride + 1;
  t.positions = t.out_h * t.out_w;
  t.patch = channels * c.kernel_h * c.kernel_w;
  t.index.resize(t.positions * t.patch);
  std::size_t k = 0;
  for (std::size_t oy = 0; oy < t.out_h; ++oy) {
    for (std::size_t ox = 0; ox < t.out_w; ++ox) {
      for (std::size_t ic = 0; ic < channels; ++ic) {
        for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
          for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
            const auto y = static_cast<std::ptrdiff_t>(oy * c.stride + ky) -
                           static_cast<std::ptrdiff_t>(c.pad);
            const auto x = static_cast<std::ptrdiff_t>(ox * c.stride + kx) -
                           static_cast<std::ptrdiff_t>(c.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(height) &&
                                x < static_cast<std::ptrdiff_t>(width);
            t.index[k++] = inside ? static_cast<std::ptrdiff_t>(
                                        (ic * height + static_cast<std::size_t>(y)) * width +
                                        static_cast<std::size_t>(x))
                                  : -1;
          }
        }
      }
    }
  }
  return t;
}

namespace {

Tensor apply_reference(const Layer& layer, const Tensor& in, const Shape& out_shape) {
  Tensor out(out_shape);
  auto dst = out.data();
  const auto src = in.data();
  std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            const ConvPatchTable t = conv_patch_table(c, in.shape());
            const auto w = layer.weights->data();
            for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
              const double b = layer.bias ? (*layer.bias)[oc] : 0.0;
              for (std::size_t pos = 0; pos < t.positions; ++pos) {
                double sum = 0.0;
                for (std::size_t k = 0; k < t.patch; ++k) {
                  const std::ptrdiff_t idx = t.index[pos * t.patch + k];
                  if (idx >= 0) sum += w[oc * t.patch + k] * src[static_cast<std::size_t>(idx)];
                }
                dst[oc * t.positions + pos] = sum + b;
              }
            }
          },
          [&](const FullyConnected& f) {
            const auto w = layer.weights->data();
            const std::size_t n = src.size();
            for (std::size_t o = 0; o < f.out_features; ++o) {
              double sum = 0.0;
              for (std::size_t i = 0; i < n; ++i) sum += w[o * n + i] * src[i];
              dst[o] = sum + (layer.bias ? (*layer.bias)[o] : 0.0);
            }
          },
          [&](const Relu&) {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(src[i], 0.0);
          },
          [&](const auto& pool) {
            using P = std::decay_t<decltype(pool)>;
            if constexpr (std::is_same_v<P, Flatten>) {
              std::copy(src.begin(), src.end(), dst.begin());
            } else {
              const std::size_t H = in.shape()[1], W = in.shape()[2];
              const std::size_t oh = out_shape[1], ow = out_shape[2];
              for (std::size_t ch = 0; ch < out_shape[0]; ++ch) {
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = std::is_same_v<P, MaxPool> ? src[(ch * H + oy * pool.stride) * W +
                                                                  ox * pool.stride]
                                                            : 0.0;
                    for (std::size_t ky = 0; ky < pool.window; ++ky) {
                      for (std::size_t kx = 0; kx < pool.window; ++kx) {
                        const double v =
                            src[(ch * H + oy * pool.stride + ky) * W + ox * pool.stride + kx];
                        if constexpr (std::is_same_v<P, MaxPool>) {
                          acc = std::max(acc, v);
                        } else {
                          acc += v;
                        }
                      }
                    }
                    if constexpr (std::is_same_v<P, AvgPool>) {
                      acc /= static_cast<double>(pool.window * pool.window);
                    }
                    dst[(ch * oh + oy) * ow + ox] = acc;
                  }
                }
              }
            }
          }},
      layer.kind);
  return out;
}

}  // namespace

std::vector<Tensor> forward_reference_trace(const Model& model, const Tensor& input) {
  if (input.shape() != model.input_shape()) {
    throw ShapeError(fmt::format("input shape {} does not match model input {}",
                                 to_string(input.shape()), to_string(model.input_shape())));
  }
  std::vector<Tensor> trace;
  trace.reserve(model.size() + 1);
  trace.push_back(input);
  for (std::size_t i = 0; i < model.size(); ++i) {
    trace.push_back(apply_reference(model.layers()[i], trace.back(), model.shape_at(i + 1)));
  }
  return trace;
}

Tensor forward_reference(const Model& model, const Tensor& input) {
  return std::move(forward_reference_trace(model, input).back());
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace mixedquant
