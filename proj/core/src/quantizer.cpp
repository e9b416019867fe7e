#include "mixedquant/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "mixedquant/error.hpp"

namespace mixedquant {

NormalizedTensor normalize_layer(const Tensor& w) {
  double scale = 0.0;
  for (const double v : w.data()) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) throw DomainError("cannot normalize an all-zero tensor");
  std::vector<double> out(w.data().begin(), w.data().end());
  for (double& v : out) v /= scale;
  return {Tensor(w.shape(), std::move(out)), scale};
}

QTensor quantize_tensor(const Tensor& w, const WeightFormat& fmt, const RoundingMode& mode) {
  const NormalizedTensor normalized = normalize_layer(w);
  QTensor q{w.shape(), std::vector<Code>(w.size()), fmt, normalized.scale};
  const auto values = normalized.tensor.data();
  for (std::size_t i = 0; i < values.size(); ++i) q.codes[i] = quantize(values[i], fmt, mode, i);
  return q;
}

QTensor make_qtensor(Shape shape, std::vector<Code> codes, WeightFormat fmt, double scale) {
  if (element_count(shape) != codes.size()) {
    throw ShapeError(fmt::format("shape {} needs {} codes, got {}", to_string(shape),
                                 element_count(shape), codes.size()));
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw DomainError(fmt::format("quantized tensor scale must be positive, got {}", scale));
  }
  for (const Code c : codes) {
    if (!is_valid_code(c, fmt)) {
      throw FormatError(fmt::format("code {} is not valid for {}", c, to_string(fmt)));
    }
  }
  return {std::move(shape), std::move(codes), std::move(fmt), scale};
}

Tensor dequantize(const QTensor& q) {
  std::vector<double> out(q.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decode(q.codes[i], q.format) * q.scale;
  return Tensor(q.shape, std::move(out));
}

}  // namespace mixedquant
