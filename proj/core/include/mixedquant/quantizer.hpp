#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixedquant/number_formats.hpp"
#include "mixedquant/rounding.hpp"
#include "mixedquant/tensor.hpp"

namespace mixedquant {

/// Quantized tensor: codes refer to the per-layer normalized weights, and
/// `scale` (the pre-normalization max |w|) restores the original magnitude.
struct QTensor {
  Shape shape;
  std::vector<Code> codes;
  WeightFormat format;
  double scale = 1.0;

  std::size_t size() const noexcept { return codes.size(); }
  friend bool operator==(const QTensor&, const QTensor&) = default;
};

struct NormalizedTensor {
  Tensor tensor;
  double scale = 1.0;
};

/// Divides by s = max |w| so the largest magnitude becomes exactly 1.
/// Throws DomainError for an all-zero tensor.
NormalizedTensor normalize_layer(const Tensor& w);

/// normalize_layer followed by element-wise quantization. In stochastic mode
/// element `i` uses draw index `i` of the mode's seed.
QTensor quantize_tensor(const Tensor& w, const WeightFormat& fmt,
                        const RoundingMode& mode = {});

/// Wraps already-computed codes; validates every code and the scale.
QTensor make_qtensor(Shape shape, std::vector<Code> codes, WeightFormat fmt, double scale);

/// decode(code) * scale, element-wise.
Tensor dequantize(const QTensor& q);

}  // namespace mixedquant
