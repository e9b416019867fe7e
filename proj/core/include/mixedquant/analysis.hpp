#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mixedquant/inference.hpp"

namespace mixedquant {

/// Counts of nonzero values per floor(log2|w|), plus the zeros.
struct ExponentHistogram {
  std::map<int, std::size_t> bins;
  std::size_t zeros = 0;

  std::size_t total() const noexcept;
  /// Most populated exponent (the larger exponent wins ties); empty when
  /// every value is zero.
  std::optional<int> mode() const;
  friend bool operator==(const ExponentHistogram&, const ExponentHistogram&) = default;
};

/// Bins the values as given; normalize first for per-layer plots.
ExponentHistogram exponent_histogram(const Tensor& w);

/// Share of elements that quantize (nearest, after per-layer normalization)
/// to a code decoding to zero. An all-zero tensor has zero fraction 1.
double zero_fraction(const Tensor& w, const WeightFormat& fmt);

/// Element-weighted zero fraction over every conv/fc layer of a model.
double model_zero_fraction(const Model& model, const WeightFormat& fmt);

struct SweepRecord {
  std::string format;
  double normalized_accuracy = 0.0;
  std::size_t saturation_count = 0;
  double zero_fraction = 0.0;
  /// Set when evaluating this grid point failed; other fields are then
  /// meaningless.
  std::optional<std::string> error;
};

struct SweepMetadata {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::string activation_format;
};

struct SweepReport {
  SweepMetadata metadata;
  std::vector<SweepRecord> records;
};

struct SweepOptions {
  int act_bits = 16;
  RoundingMode rounding = {};
  std::size_t workers = 1;
  std::size_t calibration_samples = 0;
  SweepMetadata metadata;
};

/// One normalized accuracy per grid point, in grid order. A failing grid
/// point yields an error record instead of aborting the sweep.
SweepReport sweep(const Model& model, const LabeledSet& dataset, const std::vector<WeightFormat>& grid,
                  const SweepOptions& options = {});

/// Header `format,normalized_accuracy,saturation_count,zero_fraction`, then
/// one row per record; accuracy and zero fraction with 6 decimals. Error
/// records leave the numeric fields empty.
std::string to_csv(const SweepReport& report);
std::string to_json(const SweepReport& report);

struct StorageReport {
  int baseline_bits = 0;
  int proposed_bits = 0;
  /// Negative when the proposed format is wider.
  std::int64_t bits_saved = 0;
  double percent_reduction = 0.0;
};

StorageReport storage_report(int baseline_bits, int proposed_bits, std::uint64_t weight_count);
StorageReport storage_report(const WeightFormat& baseline, const WeightFormat& proposed,
                             std::uint64_t weight_count);

/// Grid helpers.
std::vector<WeightFormat> fixed_grid(int min_total_bits, int max_total_bits);
std::vector<WeightFormat> exponent_range_grid(int mantissa_bits, const std::vector<int>& ranges,
                                              bool implicit_bit = true);

}  // namespace mixedquant
