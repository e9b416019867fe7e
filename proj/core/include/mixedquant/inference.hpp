#pragma once

// Quantized emulation of a Model: weights quantized per layer, activations
// held as fixed-point codes at every layer boundary, and every conv/fc inner
// product run through the MAC datapath.
//
// Activation formats are calibrated per boundary from a reference pass over a
// calibration batch: frac_bits = (act_bits - 1) - ceil(log2(max |x|)), clamped
// to [0, act_bits - 1]. Relu, pooling and flatten keep their input format.
// The per-layer weight scale and the full-precision bias enter at
// requantization.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "mixedquant/dataset.hpp"
#include "mixedquant/mac_datapath.hpp"
#include "mixedquant/model.hpp"

namespace mixedquant {

struct ReferenceMode {};

struct QuantizedMode {
  WeightFormat weight_format = MiniFloatFormat(3, 4);
  int act_bits = 16;
  int acc_bits = kDefaultAccumulatorBits;
  bool saturate = true;
  /// Applied to weight quantization; activations always round to nearest.
  RoundingMode rounding = {};
  /// Calibration batch size taken from the front of the dataset; 0 = all.
  std::size_t calibration_samples = 0;
};

using EvalMode = std::variant<ReferenceMode, QuantizedMode>;

/// Activation tensor in fixed-point form.
struct ActTensor {
  Shape shape;
  std::vector<Code> codes;
  FixedFormat format{16, 8};

  Tensor decoded() const;
  friend bool operator==(const ActTensor&, const ActTensor&) = default;
};

/// Fraction bits for a calibrated maximum magnitude.
int calibrated_frac_bits(double max_abs, int total_bits);

struct QuantizedForward {
  Tensor logits;
  ActTensor output;
  /// Accumulator overflows plus activations clamped at requantization.
  std::size_t saturations = 0;
};

class QuantizedNetwork {
 public:
  struct Stage {
    Layer layer;
    FixedFormat in_format;
    FixedFormat out_format;
    // conv/fc only
    std::optional<QTensor> weights;
    std::vector<WeightOperand> operands;
    std::optional<MacConfig> mac;
    std::vector<double> bias;
    ConvPatchTable patches;
  };

  /// Calibrates on `calibration` (reference mode) and quantizes every conv/fc
  /// layer. Layers that carry stored quantized weights of the requested
  /// format reuse them unchanged.
  static QuantizedNetwork build(const Model& model, const QuantizedMode& mode,
                                std::span<const Tensor> calibration);

  /// Uses explicit boundary formats (size() + 1 entries) instead of
  /// calibration.
  static QuantizedNetwork build_with_formats(const Model& model, const QuantizedMode& mode,
                                             std::vector<FixedFormat> boundary_formats);

  const Model& model() const noexcept { return model_; }
  const std::vector<Stage>& stages() const noexcept { return stages_; }
  std::size_t size() const noexcept { return stages_.size(); }
  /// Activation format at the input of stage i; boundary_format(size()) is
  /// the output format.
  const FixedFormat& boundary_format(std::size_t i) const;

  ActTensor quantize_input(const Tensor& input) const;
  /// Runs stages [begin, end) on codes in boundary_format(begin).
  ActTensor run(const ActTensor& input, std::size_t begin, std::size_t end,
                std::size_t* saturations = nullptr) const;
  QuantizedForward forward(const Tensor& input) const;

  /// Stages [begin, end) with their formats and weights unchanged.
  QuantizedNetwork slice(std::size_t begin, std::size_t end) const;

 private:
  QuantizedNetwork(Model model, std::vector<Stage> stages);
  Model model_;
  std::vector<Stage> stages_;
};

/// Logits of one sample. Quantized mode calibrates on this input alone.
Tensor forward(const Model& model, const Tensor& input, const EvalMode& mode);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t samples = 0;
  std::size_t saturations = 0;
};

/// Top-1 accuracy; argmax ties go to the lowest class index. Samples are
/// processed on up to `workers` threads (0 = all processors); the result
/// does not depend on the worker count.
EvalResult evaluate_detailed(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                             std::size_t workers = 1);
double evaluate(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                std::size_t workers = 1);

/// evaluate(mode) / evaluate(reference). Throws DomainError when the
/// reference accuracy is zero.
double normalized_accuracy(const Model& model, const LabeledSet& dataset, const EvalMode& mode,
                           std::size_t workers = 1);

}  // namespace mixedquant
