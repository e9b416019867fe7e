#include "mixedquant/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "mixedquant/error.hpp"

namespace mixedquant {

namespace {

constexpr std::size_t kBiasCalibrationPool = 256;
constexpr std::size_t kMaxDrawsPerSample = 200;

// Box-Muller on mt19937_64 output; the engine's sequence is fixed by the
// standard, which keeps fixtures identical across standard libraries.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Gaussian scale mixture with log2-scale deviation `spread`, normalized to
// the He RMS sqrt(2 / fan_in). Rows are output units.
Tensor mixture_weights(NormalSource& rng, Shape shape, double spread) {
  Tensor t(std::move(shape));
  const std::size_t fan_in = t.size() / t.shape()[0];
  const double ln_spread = spread * std::numbers::ln2;
  const double rms = std::sqrt(2.0 / static_cast<double>(fan_in)) /
                     std::exp(ln_spread * ln_spread);
  for (double& v : t.data()) v = rng.normal() * std::exp2(spread * rng.normal()) * rms;
  return t;
}

std::vector<double> unit_scales(NormalSource& rng, std::size_t n, double spread) {
  std::vector<double> s(n);
  for (double& v : s) v = std::exp2(spread * rng.normal());
  return s;
}

// Multiplies row r by rows[r] and column c by cols[c / col_group].
void rescale(Tensor& w, std::span<const double> rows, std::span<const double> cols,
             std::size_t col_group) {
  const std::size_t n_rows = w.shape()[0];
  const std::size_t n_cols = w.size() / n_rows;
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      double& v = w.data()[r * n_cols + c];
      if (!rows.empty()) v *= rows[r];
      if (!cols.empty()) v /= cols[c / col_group];
    }
  }
}

void round_to_f32(Tensor& w) {
  for (double& v : w.data()) v = to_f32(v);
}

Tensor noise_image(NormalSource& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.data()) v = to_f32(rng.normal());
  return t;
}

// Relative gap between the two largest logits.
double margin(std::span<const double> logits) {
  double first = -INFINITY, second = -INFINITY, lo = INFINITY;
  for (const double v : logits) {
    lo = std::min(lo, v);
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  const double range = first - lo;
  return range > 0.0 ? (first - second) / range : 0.0;
}

}  // namespace

Fixture generate_fixture(std::uint64_t seed, const FixtureSpec& spec) {
  if (spec.input_size == 0 || spec.conv_channels == 0 || spec.kernel == 0 || spec.pool == 0 ||
      spec.hidden == 0 || spec.samples == 0) {
    throw DomainError("fixture spec has a zero-size layer or no samples");
  }
  if (spec.classes < 2) throw DomainError("fixture needs at least two classes");
  if (spec.kernel > spec.input_size) throw DomainError("fixture kernel larger than input");
  const std::size_t conv_out = spec.input_size - spec.kernel + 1;
  if (spec.pool > conv_out) throw DomainError("fixture pool window larger than conv output");
  if (!(spec.min_margin >= 0.0 && spec.min_margin < 1.0)) {
    throw DomainError("fixture margin must be in [0, 1)");
  }
  const std::size_t pooled = (conv_out - spec.pool) / spec.pool + 1;
  const std::size_t flat = spec.conv_channels * pooled * pooled;
  const Shape input_shape{1, spec.input_size, spec.input_size};

  NormalSource rng(seed);
  Tensor conv_w = mixture_weights(rng, {spec.conv_channels, 1, spec.kernel, spec.kernel},
                                  spec.conv_weight_log2_spread);
  Tensor fc1_w = mixture_weights(rng, {spec.hidden, flat}, spec.fc_weight_log2_spread);
  Tensor fc2_w = mixture_weights(rng, {spec.classes, spec.hidden}, spec.fc_weight_log2_spread);
  const std::vector<double> channel_scale =
      unit_scales(rng, spec.conv_channels, spec.channel_log2_spread);
  const std::vector<double> hidden_scale = unit_scales(rng, spec.hidden, spec.hidden_log2_spread);
  rescale(conv_w, channel_scale, {}, 1);
  rescale(fc1_w, hidden_scale, channel_scale, pooled * pooled);
  rescale(fc2_w, {}, hidden_scale, 1);
  round_to_f32(conv_w);
  round_to_f32(fc1_w);
  round_to_f32(fc2_w);

  std::vector<Layer> layers;
  layers.push_back({"conv1", Conv2d{spec.conv_channels, spec.kernel, spec.kernel, 1, 0},
                    std::move(conv_w), std::nullopt, std::nullopt});
  layers.push_back({"relu1", Relu{}, std::nullopt, std::nullopt, std::nullopt});
  layers.push_back({"pool1", MaxPool{spec.pool, spec.pool}, std::nullopt, std::nullopt, std::nullopt});
  layers.push_back({"flatten", Flatten{}, std::nullopt, std::nullopt, std::nullopt});
  layers.push_back({"fc1", FullyConnected{spec.hidden}, std::move(fc1_w), std::nullopt, std::nullopt});
  layers.push_back({"relu2", Relu{}, std::nullopt, std::nullopt, std::nullopt});
  layers.push_back({"fc2", FullyConnected{spec.classes}, std::move(fc2_w), std::nullopt, std::nullopt});

  // Standardize each class logit over a calibration pool so argmax labels
  // spread across classes.
  {
    const Model unbiased(input_shape, layers);
    std::vector<double> sum(spec.classes, 0.0), sum_sq(spec.classes, 0.0);
    for (std::size_t i = 0; i < kBiasCalibrationPool; ++i) {
      const Tensor logits = forward_reference(unbiased, noise_image(rng, input_shape));
      for (std::size_t k = 0; k < spec.classes; ++k) {
        sum[k] += logits[k];
        sum_sq[k] += logits[k] * logits[k];
      }
    }
    const auto n = static_cast<double>(kBiasCalibrationPool);
    Tensor& w = *layers.back().weights;
    Tensor bias({spec.classes});
    for (std::size_t k = 0; k < spec.classes; ++k) {
      const double mean = sum[k] / n;
      const double sd = std::sqrt(std::max(sum_sq[k] / n - mean * mean, 0.0));
      const double gain = sd > 0.0 ? 1.0 / sd : 1.0;
      for (std::size_t j = 0; j < spec.hidden; ++j) {
        w[k * spec.hidden + j] = to_f32(w[k * spec.hidden + j] * gain);
      }
      bias[k] = to_f32(-mean * gain);
    }
    layers.back().bias = std::move(bias);
  }
  Model model(input_shape, std::move(layers));

  // Equal quotas per class (the first samples % classes classes take one
  // extra), kept in draw order.
  std::vector<std::size_t> quota(spec.classes, spec.samples / spec.classes);
  for (std::size_t k = 0; k < spec.samples % spec.classes; ++k) ++quota[k];
  std::vector<Tensor> samples;
  std::vector<std::uint32_t> labels;
  samples.reserve(spec.samples);
  labels.reserve(spec.samples);
  std::size_t draws = 0;
  while (samples.size() < spec.samples) {
    if (++draws > kMaxDrawsPerSample * spec.samples) {
      throw DomainError(fmt::format("could not draw {} class-balanced samples with margin {}",
                                    spec.samples, spec.min_margin));
    }
    Tensor x = noise_image(rng, input_shape);
    const Tensor logits = forward_reference(model, x);
    if (margin(logits.data()) < spec.min_margin) continue;
    const std::size_t label = argmax(logits.data());
    if (quota[label] == 0) continue;
    --quota[label];
    labels.push_back(static_cast<std::uint32_t>(label));
    samples.push_back(std::move(x));
  }
  return {std::move(model), LabeledSet(input_shape, spec.classes, std::move(samples), std::move(labels))};
}

}  // namespace mixedquant
