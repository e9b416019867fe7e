#pragma once

// Fixed-point and minifloat value systems used for weights and activations.
//
// Fixed-point codes are two's-complement integers scaled by 2^-frac_bits.
// Minifloat codes are unsigned bit patterns laid out as
//
//   [sign | exponent field (e bits) | fraction (m bits)]
//
// with unbiased exponent E = field - bias. With the implicit bit the
// significand is 1 + f/2^m, otherwise f/2^m. Implicit-bit formats reserve the
// pattern (E = E_min, f = 0) for exact zero. There are no NaN or infinity
// encodings; out-of-range inputs saturate.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mixedquant/rounding.hpp"

namespace mixedquant {

/// Integer code of a quantized value. Signed for fixed-point formats, an
/// unsigned bit pattern (always non-negative) for minifloat formats.
using Code = std::int64_t;

class FixedFormat {
 public:
  /// Throws FormatError unless 2 <= total_bits <= 32 and
  /// 0 <= frac_bits <= total_bits - 1.
  FixedFormat(int total_bits, int frac_bits);

  int total_bits() const noexcept { return total_bits_; }
  int frac_bits() const noexcept { return frac_bits_; }

  Code min_code() const noexcept { return -(Code{1} << (total_bits_ - 1)); }
  Code max_code() const noexcept { return (Code{1} << (total_bits_ - 1)) - 1; }
  double resolution() const noexcept;
  double min_value() const noexcept;
  double max_value() const noexcept;

  friend bool operator==(const FixedFormat&, const FixedFormat&) = default;

 private:
  int total_bits_;
  int frac_bits_;
};

class MiniFloatFormat {
 public:
  /// `exponent_range` (R) restricts E to {-(R-1), ..., 0} relative to the
  /// largest exponent; the stored field then spans [0, R-1]. `bias` defaults to
  /// the largest valid field value so that E_max = 0.
  ///
  /// Throws FormatError unless 0 <= m <= 23, 0 <= e <= 8, m + e >= 1,
  /// 1 <= R <= 2^e, and m >= 1 when the implicit bit is off.
  MiniFloatFormat(int mantissa_bits, int exponent_bits, bool implicit_bit = true,
                  std::optional<int> exponent_range = std::nullopt,
                  std::optional<int> bias = std::nullopt);

  /// Exponent-range-limited format with the narrowest exponent field that
  /// holds R values, e = ceil(log2(R)).
  static MiniFloatFormat with_exponent_range(int mantissa_bits, int range,
                                             bool implicit_bit = true);

  int mantissa_bits() const noexcept { return m_; }
  int exponent_bits() const noexcept { return e_; }
  bool implicit_bit() const noexcept { return implicit_; }
  std::optional<int> exponent_range() const noexcept { return range_; }
  int bias() const noexcept { return bias_; }
  bool has_default_bias() const noexcept { return bias_ == max_field(); }

  /// Largest valid stored exponent field.
  int max_field() const noexcept { return range_ ? *range_ - 1 : (1 << e_) - 1; }
  int min_exponent() const noexcept { return -bias_; }
  int max_exponent() const noexcept { return max_field() - bias_; }

  int width() const noexcept { return 1 + m_ + e_; }
  double max_value() const noexcept;
  double min_positive() const noexcept;

  friend bool operator==(const MiniFloatFormat&, const MiniFloatFormat&) = default;

 private:
  int m_;
  int e_;
  bool implicit_;
  std::optional<int> range_;
  int bias_;
};

using WeightFormat = std::variant<FixedFormat, MiniFloatFormat>;

/// Maps the (m, e) notation onto a format: e = 0 is fixed point with m
/// fractional bits plus sign, otherwise a minifloat with the default bias.
WeightFormat weight_format_from_me(int mantissa_bits, int exponent_bits,
                                   bool implicit_bit = true);

/// Storage width in bits, sign included.
int format_width_bits(const WeightFormat& fmt) noexcept;

// Bit fields of a minifloat code.
struct FloatFields {
  bool negative = false;
  int exponent_field = 0;
  std::uint32_t fraction = 0;
};

/// Throws FormatError if the pattern has bits beyond the format width or an
/// exponent field outside the allowed range.
FloatFields unpack(Code code, const MiniFloatFormat& fmt);
Code pack(const FloatFields& fields, const MiniFloatFormat& fmt);

/// True when the minifloat pattern decodes to zero.
bool is_zero_code(Code code, const MiniFloatFormat& fmt);

/// Integer significand (implicit bit included) and unbiased exponent of a
/// nonzero minifloat code: |value| = significand * 2^(exponent - m).
struct Significand {
  std::int64_t magnitude = 0;
  int exponent = 0;
  bool negative = false;
};
Significand significand_of(Code code, const MiniFloatFormat& fmt);

Code quantize_fixed(double x, const FixedFormat& fmt, const RoundingMode& mode = {},
                    std::uint64_t draw_index = 0);
Code quantize_minifloat(double x, const MiniFloatFormat& fmt,
                        const RoundingMode& mode = {}, std::uint64_t draw_index = 0);
Code quantize(double x, const WeightFormat& fmt, const RoundingMode& mode = {},
              std::uint64_t draw_index = 0);

bool is_valid_code(Code code, const FixedFormat& fmt) noexcept;
bool is_valid_code(Code code, const MiniFloatFormat& fmt) noexcept;
bool is_valid_code(Code code, const WeightFormat& fmt) noexcept;

/// Exact value of a code. Throws FormatError for invalid patterns.
double decode(Code code, const FixedFormat& fmt);
double decode(Code code, const MiniFloatFormat& fmt);
double decode(Code code, const WeightFormat& fmt);

/// All distinct representable values in increasing order. Refuses formats
/// wider than 16 bits.
std::vector<double> enumerate_values(const WeightFormat& fmt);

// Descriptor syntax, case-insensitive:
//   fixed:<total>f<frac>                  e.g. fixed:8f7
//   float:<m>m<e>e[+i|-i][r<R>][b<bias>]  e.g. float:3m4e+i, float:2m4e+ir8
// The implicit bit defaults to on. `b<bias>` is only printed for non-default
// biases.
WeightFormat parse_format(std::string_view descriptor);
FixedFormat parse_fixed_format(std::string_view descriptor);
std::string to_string(const FixedFormat& fmt);
std::string to_string(const MiniFloatFormat& fmt);
std::string to_string(const WeightFormat& fmt);

}  // namespace mixedquant
