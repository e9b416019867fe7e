#pragma once

// Bit-exact model of the mixed multiply-accumulate unit: a fixed-point
// activation times a weight code, computed as an integer multiply by the
// weight's significand followed by a shift that aligns the product to a
// single shared fixed-point accumulator scale.
//
// Products are exact whenever acc_frac_bits >= exact_frac_bits(); a smaller
// override right-shifts (floors) products of the smallest weights. Addition
// is plain two's-complement integer addition with optional saturation.
// Accumulators up to 64 bits run on native integers; wider ones (needed for
// exact products of formats spanning many binades) on a 512-bit integer.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <span>

#include "mixedquant/number_formats.hpp"
#include "mixedquant/rounding.hpp"

namespace mixedquant {

inline constexpr int kDefaultAccumulatorBits = 64;
inline constexpr int kMaxAccumulatorBits = 448;

/// Accumulator register contents.
using AccInt = boost::multiprecision::int512_t;

/// A weight code split into what the multiplier and the shifter see:
/// value = significand * 2^-frac_bits.
struct WeightOperand {
  std::int64_t significand = 0;  // signed
  int frac_bits = 0;
};

WeightOperand weight_operand(Code code, const WeightFormat& fmt);

class MacConfig {
 public:
  /// `acc_frac_bits` defaults to exact_frac_bits(act, w). `acc_bits` defaults
  /// to kDefaultAccumulatorBits, widened when a single exact product needs
  /// more. Throws FormatError unless
  /// act.total_bits + m + 2 <= acc_bits <= kMaxAccumulatorBits (m is the
  /// weight's significand width, frac bits for fixed-point weights).
  MacConfig(FixedFormat act_format, WeightFormat weight_format,
            std::optional<int> acc_bits = std::nullopt,
            std::optional<int> acc_frac_bits = std::nullopt, bool saturate = true);

  /// Widest-exact layout for a dot product of `fan_in` terms whose worst case
  /// must not overflow `acc_bits`: the exact fraction width when it fits,
  /// otherwise the largest fraction width that does.
  static MacConfig for_fan_in(FixedFormat act_format, WeightFormat weight_format,
                              std::size_t fan_in, int acc_bits = kDefaultAccumulatorBits);

  /// F_a + m - E_min for minifloat weights, F_a + F_w for fixed-point weights.
  static int exact_frac_bits(const FixedFormat& act, const WeightFormat& w);

  const FixedFormat& act_format() const noexcept { return act_; }
  const WeightFormat& weight_format() const noexcept { return weight_; }
  int acc_bits() const noexcept { return acc_bits_; }
  int acc_frac_bits() const noexcept { return acc_frac_bits_; }
  bool saturate() const noexcept { return saturate_; }
  bool is_exact() const { return acc_frac_bits_ >= exact_frac_bits(act_, weight_); }

  const AccInt& acc_min() const noexcept { return acc_min_; }
  const AccInt& acc_max() const noexcept { return acc_max_; }

 private:
  FixedFormat act_;
  WeightFormat weight_;
  int acc_bits_;
  int acc_frac_bits_;
  bool saturate_;
  AccInt acc_min_;
  AccInt acc_max_;
};

/// Smallest two's-complement width that holds any sum of `fan_in` products of
/// extreme operand codes at `acc_frac_bits`.
int worst_case_accumulator_bits(const FixedFormat& act, const WeightFormat& w, int acc_frac_bits,
                                std::size_t fan_in);

/// Accumulator contents, scaled by 2^-frac_bits. `overflow` is sticky: once a
/// saturating operation clamps, every sum that includes it keeps the flag.
struct AccValue {
  AccInt value = 0;
  int frac_bits = 0;
  bool overflow = false;

  friend bool operator==(const AccValue&, const AccValue&) = default;
};

AccValue zero_accumulator(const MacConfig& cfg) noexcept;

/// Throws OverflowError if the product does not fit and saturation is off.
AccValue mixed_multiply(Code act_code, Code weight_code, const MacConfig& cfg);
AccValue mixed_multiply(Code act_code, const WeightOperand& weight, const MacConfig& cfg);

AccValue accumulate(const AccValue& acc, const AccValue& product, const MacConfig& cfg);

AccValue dot_product(std::span<const Code> act_codes, std::span<const Code> weight_codes,
                     const MacConfig& cfg);
/// Same fold over pre-split weights (see weight_operand).
AccValue dot_product(std::span<const Code> act_codes, std::span<const WeightOperand> weights,
                     const MacConfig& cfg);

/// Accumulator value as a real number; exact when the value has at most 64
/// significant bits.
long double accumulator_value(const AccValue& acc) noexcept;

struct Requantized {
  Code code = 0;
  bool saturated = false;
};

/// decode(acc) * layer_scale + bias in extended precision, then rounded into
/// `out_fmt` with saturation.
Requantized requantize_checked(const AccValue& acc, double layer_scale, const FixedFormat& out_fmt,
                               const RoundingMode& mode = {}, double bias = 0.0,
                               std::uint64_t draw_index = 0);
Code requantize(const AccValue& acc, double layer_scale, const FixedFormat& out_fmt,
                const RoundingMode& mode = {}, double bias = 0.0, std::uint64_t draw_index = 0);

}  // namespace mixedquant
