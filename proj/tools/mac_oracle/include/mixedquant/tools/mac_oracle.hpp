#pragma once

// Exact rational reference for the mixed multiplier. Codes are decoded from
// their bit fields here, from the format parameters only, so the check does
// not share decoding logic with the library under test.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <variant>

#include "mixedquant/mac_datapath.hpp"
#include "mixedquant/number_formats.hpp"

namespace mixedquant::oracle {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline Rational pow2(int k) {
  BigInt one = 1;
  return k >= 0 ? Rational(one << k) : Rational(BigInt(1), one << -k);
}

inline Rational fixed_value(Code code, int frac_bits) {
  return Rational(BigInt(code)) * pow2(-frac_bits);
}

/// Empty for patterns outside the format (extra bits, field above the cap).
inline std::optional<Rational> minifloat_value(Code code, const MiniFloatFormat& fmt) {
  const int m = fmt.mantissa_bits();
  const int e = fmt.exponent_bits();
  if (code < 0 || (code >> (1 + m + e)) != 0) return std::nullopt;
  const auto bits = static_cast<std::uint64_t>(code);
  const bool negative = ((bits >> (m + e)) & 1u) != 0;
  const int field = static_cast<int>((bits >> m) & ((std::uint64_t{1} << e) - 1));
  const auto fraction = static_cast<std::int64_t>(bits & ((std::uint64_t{1} << m) - 1));
  const int top_field = fmt.exponent_range() ? *fmt.exponent_range() - 1 : (1 << e) - 1;
  if (field > top_field) return std::nullopt;
  Rational magnitude;
  if (fmt.implicit_bit()) {
    if (field == 0 && fraction == 0) return Rational(0);
    magnitude = Rational(BigInt((std::int64_t{1} << m) + fraction)) * pow2(field - fmt.bias() - m);
  } else {
    magnitude = Rational(BigInt(fraction)) * pow2(field - fmt.bias() - m);
  }
  return negative ? -magnitude : magnitude;
}

inline std::optional<Rational> weight_value(Code code, const WeightFormat& fmt) {
  if (const auto* f = std::get_if<FixedFormat>(&fmt)) {
    if (code < f->min_code() || code > f->max_code()) return std::nullopt;
    return fixed_value(code, f->frac_bits());
  }
  return minifloat_value(code, std::get<MiniFloatFormat>(fmt));
}

inline Rational accumulator_rational(const AccValue& acc) {
  return Rational(BigInt(acc.value)) * pow2(-acc.frac_bits);
}

struct MacVerifyResult {
  std::uint64_t cases = 0;
  std::uint64_t exact = 0;
  std::optional<Code> first_bad_act;
  std::optional<Code> first_bad_weight;
};

/// Every activation code of `act` against every valid weight code of `w`,
/// through mixed_multiply at the exact accumulator layout.
inline MacVerifyResult verify_all_products(const FixedFormat& act, const WeightFormat& w) {
  const MacConfig cfg(act, w);
  const int width = format_width_bits(w);
  MacVerifyResult r;
  const Code w_lo = std::holds_alternative<FixedFormat>(w) ? std::get<FixedFormat>(w).min_code() : 0;
  const Code w_hi = std::holds_alternative<FixedFormat>(w) ? std::get<FixedFormat>(w).max_code()
                                                            : (Code{1} << width) - 1;
  for (Code a = act.min_code(); a <= act.max_code(); ++a) {
    const Rational av = fixed_value(a, act.frac_bits());
    for (Code c = w_lo; c <= w_hi; ++c) {
      const std::optional<Rational> wv = weight_value(c, w);
      if (!wv) continue;
      ++r.cases;
      const AccValue p = mixed_multiply(a, c, cfg);
      if (!p.overflow && accumulator_rational(p) == av * *wv) {
        ++r.exact;
      } else if (!r.first_bad_act) {
        r.first_bad_act = a;
        r.first_bad_weight = c;
      }
    }
  }
  return r;
}

}  // namespace mixedquant::oracle
