#include "mixedquant/analysis.hpp"

#include <cmath>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mixedquant/error.hpp"

namespace mixedquant {

std::size_t ExponentHistogram::total() const noexcept {
  std::size_t n = zeros;
  for (const auto& [exp, count] : bins) n += count;
  return n;
}

std::optional<int> ExponentHistogram::mode() const {
  std::optional<int> best;
  std::size_t best_count = 0;
  for (const auto& [exp, count] : bins) {
    if (count >= best_count) {
      best = exp;
      best_count = count;
    }
  }
  return best;
}

ExponentHistogram exponent_histogram(const Tensor& w) {
  ExponentHistogram h;
  for (const double v : w.data()) {
    if (v == 0.0) {
      ++h.zeros;
    } else {
      ++h.bins[std::ilogb(v)];
    }
  }
  return h;
}

double zero_fraction(const Tensor& w, const WeightFormat& fmt) {
  if (w.size() == 0) throw DomainError("zero fraction of an empty tensor");
  double max_abs = 0.0;
  for (const double v : w.data()) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs == 0.0) return 1.0;
  const QTensor q = quantize_tensor(w, fmt);
  std::size_t zeros = 0;
  for (const Code c : q.codes) zeros += decode(c, fmt) == 0.0 ? 1 : 0;
  return static_cast<double>(zeros) / static_cast<double>(q.size());
}

double model_zero_fraction(const Model& model, const WeightFormat& fmt) {
  double zeros = 0.0;
  double total = 0.0;
  for (const Layer& layer : model.layers()) {
    if (!layer.has_weights()) continue;
    const auto n = static_cast<double>(layer.weights->size());
    zeros += zero_fraction(*layer.weights, fmt) * n;
    total += n;
  }
  return total > 0.0 ? zeros / total : 0.0;
}

SweepReport sweep(const Model& model, const LabeledSet& dataset, const std::vector<WeightFormat>& grid,
                  const SweepOptions& options) {
  if (grid.empty()) throw DomainError("sweep grid is empty");
  SweepReport report;
  report.metadata = options.metadata;
  if (report.metadata.activation_format.empty()) {
    report.metadata.activation_format = fmt::format("fixed:{}(calibrated)", options.act_bits);
  }
  const double reference = evaluate(model, dataset, ReferenceMode{}, options.workers);
  for (const WeightFormat& fmt : grid) {
    SweepRecord record;
    record.format = to_string(fmt);
    try {
      if (reference == 0.0) throw DomainError("reference accuracy is zero; cannot normalize");
      QuantizedMode mode;
      mode.weight_format = fmt;
      mode.act_bits = options.act_bits;
      mode.rounding = options.rounding;
      mode.calibration_samples = options.calibration_samples;
      const EvalResult r = evaluate_detailed(model, dataset, mode, options.workers);
      record.normalized_accuracy = r.accuracy / reference;
      record.saturation_count = r.saturations;
      record.zero_fraction = model_zero_fraction(model, fmt);
    } catch (const std::exception& e) {
      record.error = e.what();
    }
    report.records.push_back(std::move(record));
  }
  return report;
}

std::string to_csv(const SweepReport& report) {
  std::string out = "format,normalized_accuracy,saturation_count,zero_fraction\n";
  for (const SweepRecord& r : report.records) {
    if (r.error) {
      out += fmt::format("{},,,\n", r.format);
    } else {
      out += fmt::format("{},{:.6f},{},{:.6f}\n", r.format, r.normalized_accuracy, r.saturation_count,
                         r.zero_fraction);
    }
  }
  return out;
}

std::string to_json(const SweepReport& report) {
  nlohmann::ordered_json j;
  j["metadata"] = {{"model_id", report.metadata.model_id},
                   {"dataset_id", report.metadata.dataset_id},
                   {"seed", report.metadata.seed},
                   {"activation_format", report.metadata.activation_format}};
  j["records"] = nlohmann::ordered_json::array();
  for (const SweepRecord& r : report.records) {
    nlohmann::ordered_json rec{{"format", r.format}};
    if (r.error) {
      rec["normalized_accuracy"] = nullptr;
      rec["saturation_count"] = nullptr;
      rec["zero_fraction"] = nullptr;
      rec["error"] = *r.error;
    } else {
      rec["normalized_accuracy"] = r.normalized_accuracy;
      rec["saturation_count"] = r.saturation_count;
      rec["zero_fraction"] = r.zero_fraction;
    }
    j["records"].push_back(std::move(rec));
  }
  return j.dump(2) + "\n";
}

StorageReport storage_report(int baseline_bits, int proposed_bits, std::uint64_t weight_count) {
  if (baseline_bits <= 0 || proposed_bits <= 0) {
    throw DomainError("storage widths must be positive");
  }
  StorageReport r;
  r.baseline_bits = baseline_bits;
  r.proposed_bits = proposed_bits;
  r.bits_saved = static_cast<std::int64_t>(baseline_bits - proposed_bits) *
                 static_cast<std::int64_t>(weight_count);
  r.percent_reduction = 100.0 * static_cast<double>(baseline_bits - proposed_bits) /
                        static_cast<double>(baseline_bits);
  return r;
}

StorageReport storage_report(const WeightFormat& baseline, const WeightFormat& proposed,
                             std::uint64_t weight_count) {
  return storage_report(format_width_bits(baseline), format_width_bits(proposed), weight_count);
}

std::vector<WeightFormat> fixed_grid(int min_total_bits, int max_total_bits) {
  std::vector<WeightFormat> grid;
  for (int t = min_total_bits; t <= max_total_bits; ++t) grid.emplace_back(FixedFormat(t, t - 1));
  return grid;
}

std::vector<WeightFormat> exponent_range_grid(int mantissa_bits, const std::vector<int>& ranges,
                                              bool implicit_bit) {
  std::vector<WeightFormat> grid;
  for (const int r : ranges) {
    grid.emplace_back(MiniFloatFormat::with_exponent_range(mantissa_bits, r, implicit_bit));
  }
  return grid;
}

}  // namespace mixedquant
