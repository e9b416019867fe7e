#include "mixedquant/mac_datapath.hpp"

#include <cmath>
#include <type_traits>
#include <vector>
#include <fmt/format.h>

#include "mixedquant/error.hpp"

namespace mixedquant {

namespace {

__extension__ typedef __int128 Wide;
using boost::multiprecision::cpp_int;

int significand_width(const WeightFormat& w) {
  if (const auto* f = std::get_if<MiniFloatFormat>(&w)) return f->mantissa_bits();
  return std::get<FixedFormat>(w).frac_bits();
}

// Largest |significand| and smallest frac_bits over every code of the format.
struct OperandExtremes {
  std::int64_t max_significand;
  int min_frac_bits;
};

OperandExtremes extremes(const WeightFormat& w) {
  if (const auto* f = std::get_if<MiniFloatFormat>(&w)) {
    const std::int64_t top = (std::int64_t{1} << f->mantissa_bits()) - 1;
    const std::int64_t sig = f->implicit_bit() ? (std::int64_t{1} << f->mantissa_bits()) + top : top;
    return {sig, f->mantissa_bits() - f->max_exponent()};
  }
  const auto& fx = std::get<FixedFormat>(w);
  return {-fx.min_code(), fx.frac_bits()};
}

int bit_length(Wide v) {
  int n = 0;
  while (v > 0) {
    v >>= 1;
    ++n;
  }
  return n;
}

int bit_length(const cpp_int& v) {
  return v > 0 ? static_cast<int>(boost::multiprecision::msb(v)) + 1 : 0;
}

[[noreturn]] void overflow_error(const char* what, const MacConfig& cfg) {
  throw OverflowError(fmt::format("{} overflows a {}-bit accumulator", what, cfg.acc_bits()));
}

// Integer arithmetic of the datapath over a working type wide enough for any
// in-range sum plus one product: Wide for accumulators up to 64 bits, AccInt
// beyond.
template <class Int>
struct Datapath {
  const MacConfig& cfg;
  Int lo;
  Int hi;

  explicit Datapath(const MacConfig& c) : cfg(c), lo(Int(c.acc_min())), hi(Int(c.acc_max())) {}

  static Int floor_shift_right(const Int& v, int shift) {
    constexpr int limit = std::is_same_v<Int, Wide> ? 126 : 510;
    if (shift >= limit) return v < 0 ? Int(-1) : Int(0);
    if (v >= 0) return v >> shift;
    const Int magnitude = -v;
    return -((magnitude + ((Int(1) << shift) - 1)) >> shift);
  }

  static int magnitude_bits(const Int& v) {
    if constexpr (std::is_same_v<Int, Wide>) {
      return bit_length(v < 0 ? -v : v);
    } else {
      return v == 0 ? 0 : static_cast<int>(boost::multiprecision::msb(v < 0 ? Int(-v) : v)) + 1;
    }
  }

  Int fit(const Int& v, bool& overflow, const char* what) const {
    if (v >= lo && v <= hi) return v;
    if (!cfg.saturate()) overflow_error(what, cfg);
    overflow = true;
    return v < lo ? lo : hi;
  }

  Int multiply(Code act_code, const WeightOperand& weight, bool& overflow) const {
    if (act_code == 0 || weight.significand == 0) return Int(0);
    // Multiplier: activation integer times weight significand.
    Int product = Int(act_code) * Int(weight.significand);
    // Shifter: align 2^-(F_a + frac_w) onto the accumulator scale.
    const int shift = cfg.acc_frac_bits() - cfg.act_format().frac_bits() - weight.frac_bits;
    if (shift >= 0) {
      if (magnitude_bits(product) + shift > cfg.acc_bits()) {
        return fit(product < 0 ? lo - 1 : hi + 1, overflow, "product");
      }
      product <<= shift;
    } else {
      product = floor_shift_right(product, -shift);
    }
    return fit(product, overflow, "product");
  }

  AccValue dot(std::span<const Code> acts, std::span<const WeightOperand> weights) const {
    Int sum = 0;
    bool overflow = false;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      sum = fit(sum + multiply(acts[i], weights[i], overflow), overflow, "accumulation");
    }
    return {AccInt(sum), cfg.acc_frac_bits(), overflow};
  }
};

void check_lengths(std::size_t acts, std::size_t weights) {
  if (acts != weights) {
    throw ShapeError(fmt::format("dot product length mismatch: {} activations, {} weights", acts,
                                 weights));
  }
}

}  // namespace

WeightOperand weight_operand(Code code, const WeightFormat& fmt) {
  if (const auto* f = std::get_if<MiniFloatFormat>(&fmt)) {
    const Significand s = significand_of(code, *f);
    return {s.negative ? -s.magnitude : s.magnitude, f->mantissa_bits() - s.exponent};
  }
  const auto& fx = std::get<FixedFormat>(fmt);
  if (!is_valid_code(code, fx)) {
    throw FormatError(fmt::format("code {} out of range for {}", code, to_string(fx)));
  }
  return {code, fx.frac_bits()};
}

// ---------------------------------------------------------------------------
// MacConfig

MacConfig::MacConfig(FixedFormat act_format, WeightFormat weight_format,
                     std::optional<int> acc_bits, std::optional<int> acc_frac_bits, bool saturate)
    : act_(act_format),
      weight_(std::move(weight_format)),
      acc_bits_(0),
      acc_frac_bits_(acc_frac_bits.value_or(exact_frac_bits(act_, weight_))),
      saturate_(saturate) {
  if (acc_frac_bits_ < -64 || acc_frac_bits_ > 600) {
    throw FormatError(fmt::format("accumulator fraction bits {} out of range", acc_frac_bits_));
  }
  acc_bits_ = acc_bits.value_or(std::max(
      kDefaultAccumulatorBits, worst_case_accumulator_bits(act_, weight_, acc_frac_bits_, 1)));
  const int min_bits = act_.total_bits() + significand_width(weight_) + 2;
  if (acc_bits_ < min_bits || acc_bits_ > kMaxAccumulatorBits) {
    throw FormatError(fmt::format("accumulator width must be in [{}, {}] for {} x {}, got {}",
                                  min_bits, kMaxAccumulatorBits, to_string(act_),
                                  to_string(weight_), acc_bits_));
  }
  acc_max_ = (AccInt(1) << (acc_bits_ - 1)) - 1;
  acc_min_ = -acc_max_ - 1;
}

int MacConfig::exact_frac_bits(const FixedFormat& act, const WeightFormat& w) {
  if (const auto* f = std::get_if<MiniFloatFormat>(&w)) {
    return act.frac_bits() + f->mantissa_bits() - f->min_exponent();
  }
  return act.frac_bits() + std::get<FixedFormat>(w).frac_bits();
}

MacConfig MacConfig::for_fan_in(FixedFormat act_format, WeightFormat weight_format,
                                std::size_t fan_in, int acc_bits) {
  int frac = exact_frac_bits(act_format, weight_format);
  while (worst_case_accumulator_bits(act_format, weight_format, frac, fan_in) > acc_bits) --frac;
  return MacConfig(act_format, std::move(weight_format), acc_bits, frac);
}

int worst_case_accumulator_bits(const FixedFormat& act, const WeightFormat& w, int acc_frac_bits,
                                std::size_t fan_in) {
  const OperandExtremes ext = extremes(w);
  const int shift = acc_frac_bits - act.frac_bits() - ext.min_frac_bits;
  cpp_int product = (cpp_int(1) << (act.total_bits() - 1)) * ext.max_significand;
  if (shift >= 0) {
    product <<= shift;
  } else {
    product >>= -shift;  // non-negative: floor
  }
  const cpp_int bound = product * fan_in;
  // Sums lie in [-bound, bound]; n bits hold up to 2^(n-1) - 1.
  return bit_length(bound) + 1;
}

// ---------------------------------------------------------------------------
// Datapath

AccValue zero_accumulator(const MacConfig& cfg) noexcept { return {0, cfg.acc_frac_bits(), false}; }

AccValue mixed_multiply(Code act_code, const WeightOperand& weight, const MacConfig& cfg) {
  bool overflow = false;
  if (cfg.acc_bits() <= 64) {
    const Wide v = Datapath<Wide>(cfg).multiply(act_code, weight, overflow);
    return {AccInt(static_cast<std::int64_t>(v)), cfg.acc_frac_bits(), overflow};
  }
  return {Datapath<AccInt>(cfg).multiply(act_code, weight, overflow), cfg.acc_frac_bits(), overflow};
}

AccValue mixed_multiply(Code act_code, Code weight_code, const MacConfig& cfg) {
  if (!is_valid_code(act_code, cfg.act_format())) {
    throw FormatError(fmt::format("activation code {} out of range for {}", act_code,
                                  to_string(cfg.act_format())));
  }
  return mixed_multiply(act_code, weight_operand(weight_code, cfg.weight_format()), cfg);
}

AccValue accumulate(const AccValue& acc, const AccValue& product, const MacConfig& cfg) {
  if (acc.frac_bits != cfg.acc_frac_bits() || product.frac_bits != cfg.acc_frac_bits()) {
    throw FormatError(fmt::format("accumulator scale mismatch: {} + {} at {} fraction bits",
                                  acc.frac_bits, product.frac_bits, cfg.acc_frac_bits()));
  }
  bool overflow = acc.overflow || product.overflow;
  const AccInt sum = Datapath<AccInt>(cfg).fit(acc.value + product.value, overflow, "accumulation");
  return {sum, cfg.acc_frac_bits(), overflow};
}

AccValue dot_product(std::span<const Code> act_codes, std::span<const Code> weight_codes,
                     const MacConfig& cfg) {
  check_lengths(act_codes.size(), weight_codes.size());
  std::vector<WeightOperand> weights;
  weights.reserve(weight_codes.size());
  for (std::size_t i = 0; i < act_codes.size(); ++i) {
    if (!is_valid_code(act_codes[i], cfg.act_format())) {
      throw FormatError(fmt::format("activation code {} out of range for {}", act_codes[i],
                                    to_string(cfg.act_format())));
    }
    weights.push_back(weight_operand(weight_codes[i], cfg.weight_format()));
  }
  return dot_product(act_codes, std::span<const WeightOperand>(weights), cfg);
}

AccValue dot_product(std::span<const Code> act_codes, std::span<const WeightOperand> weights,
                     const MacConfig& cfg) {
  check_lengths(act_codes.size(), weights.size());
  if (cfg.acc_bits() <= 64) return Datapath<Wide>(cfg).dot(act_codes, weights);
  return Datapath<AccInt>(cfg).dot(act_codes, weights);
}

long double accumulator_value(const AccValue& acc) noexcept {
  return std::ldexp(acc.value.convert_to<long double>(), -acc.frac_bits);
}

Requantized requantize_checked(const AccValue& acc, double layer_scale, const FixedFormat& out_fmt,
                               const RoundingMode& mode, double bias, std::uint64_t draw_index) {
  const long double y = accumulator_value(acc) * static_cast<long double>(layer_scale) +
                        static_cast<long double>(bias);
  const long double scaled = std::ldexp(y, out_fmt.frac_bits());
  const long double lo = static_cast<long double>(out_fmt.min_code());
  const long double hi = static_cast<long double>(out_fmt.max_code());
  if (scaled < lo) return {out_fmt.min_code(), true};
  if (scaled > hi) return {out_fmt.max_code(), true};
  return {static_cast<Code>(round_to_integer(scaled, mode, draw_index)), false};
}

Code requantize(const AccValue& acc, double layer_scale, const FixedFormat& out_fmt,
                const RoundingMode& mode, double bias, std::uint64_t draw_index) {
  return requantize_checked(acc, layer_scale, out_fmt, mode, bias, draw_index).code;
}

}  // namespace mixedquant
