#include "mixedquant/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "mixedquant/error.hpp"
#include "mixedquant/parallel.hpp"

namespace mixedquant {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::uint64_t kWeightStreamSalt = 0x5745494748545321ULL;

}  // namespace

Tensor ActTensor::decoded() const {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = decode(codes[i], format);
  return Tensor(shape, std::move(out));
}

int calibrated_frac_bits(double max_abs, int total_bits) {
  const int top = total_bits - 1;
  if (!(max_abs > 0.0)) return top;
  const int integer_bits = static_cast<int>(std::ceil(std::log2(max_abs)));
  return std::clamp(top - integer_bits, 0, top);
}

QuantizedNetwork::QuantizedNetwork(Model model, std::vector<Stage> stages)
    : model_(std::move(model)), stages_(std::move(stages)) {}

QuantizedNetwork QuantizedNetwork::build(const Model& model, const QuantizedMode& mode,
                                         std::span<const Tensor> calibration) {
  if (calibration.empty()) throw DomainError("calibration batch is empty");
  std::vector<double> max_abs(model.size() + 1, 0.0);
  for (const Tensor& sample : calibration) {
    const std::vector<Tensor> trace = forward_reference_trace(model, sample);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      for (const double v : trace[i].data()) max_abs[i] = std::max(max_abs[i], std::fabs(v));
    }
  }
  std::vector<FixedFormat> formats;
  formats.reserve(model.size() + 1);
  formats.emplace_back(mode.act_bits, calibrated_frac_bits(max_abs[0], mode.act_bits));
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (model.layers()[i].has_weights()) {
      formats.emplace_back(mode.act_bits, calibrated_frac_bits(max_abs[i + 1], mode.act_bits));
    } else {
      formats.push_back(formats.back());
    }
  }
  return build_with_formats(model, mode, std::move(formats));
}

QuantizedNetwork QuantizedNetwork::build_with_formats(const Model& model, const QuantizedMode& mode,
                                                      std::vector<FixedFormat> formats) {
  if (formats.size() != model.size() + 1) {
    throw ShapeError(fmt::format("expected {} boundary formats, got {}", model.size() + 1,
                                 formats.size()));
  }
  std::vector<Stage> stages;
  stages.reserve(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const Layer& layer = model.layers()[i];
    Stage stage{layer, formats[i], formats[i + 1], {}, {}, {}, {}, {}};
    if (!layer.has_weights() && !(formats[i] == formats[i + 1])) {
      throw FormatError(fmt::format("layer '{}' cannot change the activation format", layer.name));
    }
    if (layer.has_weights()) {
      RoundingMode rounding = mode.rounding;
      rounding.seed = derive_seed(mode.rounding.seed, kWeightStreamSalt + i);
      QTensor q = (layer.quantized && layer.quantized->format == mode.weight_format)
                      ? *layer.quantized
                      : quantize_tensor(*layer.weights, mode.weight_format, rounding);
      stage.operands.reserve(q.size());
      for (const Code c : q.codes) stage.operands.push_back(weight_operand(c, q.format));
      const MacConfig sized =
          MacConfig::for_fan_in(formats[i], mode.weight_format, model.fan_in(i), mode.acc_bits);
      stage.mac.emplace(formats[i], mode.weight_format, mode.acc_bits, sized.acc_frac_bits(),
                        mode.saturate);
      const std::size_t outputs = q.shape[0];
      stage.bias.assign(outputs, 0.0);
      if (layer.bias) {
        std::copy(layer.bias->data().begin(), layer.bias->data().end(), stage.bias.begin());
      }
      if (const auto* conv = std::get_if<Conv2d>(&layer.kind)) {
        stage.patches = conv_patch_table(*conv, model.shape_at(i));
      }
      stage.weights = std::move(q);
    }
    stages.push_back(std::move(stage));
  }
  return QuantizedNetwork(model, std::move(stages));
}

const FixedFormat& QuantizedNetwork::boundary_format(std::size_t i) const {
  if (i == stages_.size()) return stages_.back().out_format;
  return stages_.at(i).in_format;
}

ActTensor QuantizedNetwork::quantize_input(const Tensor& input) const {
  if (input.shape() != model_.input_shape()) {
    throw ShapeError(fmt::format("input shape {} does not match model input {}",
                                 to_string(input.shape()), to_string(model_.input_shape())));
  }
  ActTensor act{input.shape(), std::vector<Code>(input.size()), boundary_format(0)};
  for (std::size_t i = 0; i < input.size(); ++i) act.codes[i] = quantize_fixed(input[i], act.format);
  return act;
}

namespace {

ActTensor run_stage(const QuantizedNetwork::Stage& stage, const ActTensor& in,
                    const Shape& out_shape, std::size_t& saturations) {
  ActTensor out{out_shape, std::vector<Code>(element_count(out_shape), 0), stage.out_format};
  const std::vector<Code>& src = in.codes;
  std::vector<Code>& dst = out.codes;

  const auto finish = [&](const AccValue& acc, std::size_t o, std::size_t dst_index) {
    const Requantized r =
        requantize_checked(acc, stage.weights->scale, stage.out_format, {}, stage.bias[o]);
    saturations += (acc.overflow ? 1 : 0) + (r.saturated ? 1 : 0);
    dst[dst_index] = r.code;
  };

  std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            const ConvPatchTable& t = stage.patches;
            std::vector<Code> patch(t.patch);
            const std::span<const WeightOperand> operands(stage.operands);
            for (std::size_t pos = 0; pos < t.positions; ++pos) {
              for (std::size_t k = 0; k < t.patch; ++k) {
                const std::ptrdiff_t idx = t.index[pos * t.patch + k];
                patch[k] = idx >= 0 ? src[static_cast<std::size_t>(idx)] : 0;
              }
              for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                const AccValue acc =
                    dot_product(patch, operands.subspan(oc * t.patch, t.patch), *stage.mac);
                finish(acc, oc, oc * t.positions + pos);
              }
            }
          },
          [&](const FullyConnected& f) {
            const std::size_t n = src.size();
            const std::span<const WeightOperand> operands(stage.operands);
            for (std::size_t o = 0; o < f.out_features; ++o) {
              finish(dot_product(src, operands.subspan(o * n, n), *stage.mac), o, o);
            }
          },
          [&](const Relu&) {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max<Code>(src[i], 0);
          },
          [&](const Flatten&) { dst = src; },
          [&](const auto& pool) {
            using P = std::decay_t<decltype(pool)>;
            const std::size_t H = in.shape[1], W = in.shape[2];
            const std::size_t oh = out_shape[1], ow = out_shape[2];
            for (std::size_t ch = 0; ch < out_shape[0]; ++ch) {
              for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                  Code best = src[(ch * H + oy * pool.stride) * W + ox * pool.stride];
                  std::int64_t sum = 0;
                  for (std::size_t ky = 0; ky < pool.window; ++ky) {
                    for (std::size_t kx = 0; kx < pool.window; ++kx) {
                      const Code v = src[(ch * H + oy * pool.stride + ky) * W + ox * pool.stride + kx];
                      best = std::max(best, v);
                      sum += v;
                    }
                  }
                  Code result = best;
                  if constexpr (std::is_same_v<P, AvgPool>) {
                    const long double mean = static_cast<long double>(sum) /
                                             static_cast<long double>(pool.window * pool.window);
                    result = static_cast<Code>(round_to_integer(mean, {}));
                  }
                  dst[(ch * oh + oy) * ow + ox] = result;
                }
              }
            }
          }},
      stage.layer.kind);
  return out;
}

}  // namespace

ActTensor QuantizedNetwork::run(const ActTensor& input, std::size_t begin, std::size_t end,
                                std::size_t* saturations) const {
  if (begin > end || end > stages_.size()) {
    throw ShapeError(fmt::format("invalid stage range [{}, {})", begin, end));
  }
  if (input.shape != model_.shape_at(begin)) {
    throw ShapeError(fmt::format("activation shape {} does not match stage input {}",
                                 to_string(input.shape), to_string(model_.shape_at(begin))));
  }
  if (!(input.format == boundary_format(begin))) {
    throw FormatError(fmt::format("activation format {} does not match stage format {}",
                                  to_string(input.format), to_string(boundary_format(begin))));
  }
  std::size_t count = 0;
  ActTensor act = input;
  for (std::size_t i = begin; i < end; ++i) {
    act = run_stage(stages_[i], act, model_.shape_at(i + 1), count);
  }
  if (saturations) *saturations += count;
  return act;
}

QuantizedForward QuantizedNetwork::forward(const Tensor& input) const {
  QuantizedForward result;
  result.output = run(quantize_input(input), 0, stages_.size(), &result.saturations);
  result.logits = result.output.decoded();
  return result;
}

QuantizedNetwork QuantizedNetwork::slice(std::size_t begin, std::size_t end) const {
  Model sub = model_.slice(begin, end);
  std::vector<Stage> stages(stages_.begin() + static_cast<std::ptrdiff_t>(begin),
                            stages_.begin() + static_cast<std::ptrdiff_t>(end));
  return QuantizedNetwork(std::move(sub), std::move(stages));
}

Tensor forward(const Model& model, const Tensor& input, const EvalMode& mode) {
  return std::visit(
      Overloaded{[&](const ReferenceMode&) { return forward_reference(model, input); },
                 [&](const QuantizedMode& q) {
                   const Tensor batch[] = {input};
                   return QuantizedNetwork::build(model, q, batch).forward(input).logits;
                 }},
      mode);
}

EvalResult evaluate_detailed(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                             std::size_t workers) {
  if (dataset.empty()) throw DomainError("cannot evaluate on an empty dataset");
  if (dataset.sample_shape() != model.input_shape()) {
    throw ShapeError(fmt::format("dataset samples {} do not match model input {}",
                                 to_string(dataset.sample_shape()), to_string(model.input_shape())));
  }
  const std::size_t n = dataset.size();
  std::vector<std::uint8_t> hit(n, 0);
  std::vector<std::size_t> saturations(n, 0);

  if (std::holds_alternative<ReferenceMode>(mode)) {
    parallel_for(n, workers, [&](std::size_t i) {
      const Tensor logits = forward_reference(model, dataset.samples()[i]);
      hit[i] = argmax(logits.data()) == dataset.labels()[i];
    });
  } else {
    const QuantizedMode& q = std::get<QuantizedMode>(mode);
    const std::size_t calib = q.calibration_samples == 0 ? n : std::min(n, q.calibration_samples);
    const QuantizedNetwork network = QuantizedNetwork::build(
        model, q, std::span<const Tensor>(dataset.samples().data(), calib));
    parallel_for(n, workers, [&](std::size_t i) {
      const QuantizedForward out = network.forward(dataset.samples()[i]);
      hit[i] = argmax(out.logits.data()) == dataset.labels()[i];
      saturations[i] = out.saturations;
    });
  }

  EvalResult result;
  result.samples = n;
  for (std::size_t i = 0; i < n; ++i) {
    result.correct += hit[i];
    result.saturations += saturations[i];
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(n);
  return result;
}

double evaluate(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                std::size_t workers) {
  return evaluate_detailed(model, dataset, mode, workers).accuracy;
}

double normalized_accuracy(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                           std::size_t workers) {
  const double reference = evaluate(model, dataset, ReferenceMode{}, workers);
  if (reference == 0.0) throw DomainError("reference accuracy is zero; cannot normalize");
  return evaluate(model, dataset, mode, workers) / reference;
}

}  // namespace mixedquant
