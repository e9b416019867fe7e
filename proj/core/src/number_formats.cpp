#include "mixedquant/number_formats.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fmt/format.h>

#include "mixedquant/error.hpp"

namespace mixedquant {

namespace {

constexpr int kMaxEnumerationWidth = 16;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct Candidate {
  double value;
  Code code;  // magnitude code, sign bit clear
};

Code choose_neighbour(double magnitude, const Candidate& lo, const Candidate& hi,
                      const RoundingMode& mode, std::uint64_t draw_index) {
  if (lo.value == magnitude) return lo.code;
  if (hi.value == magnitude) return hi.code;
  const double down = magnitude - lo.value;
  const double up = hi.value - magnitude;
  if (mode.is_stochastic()) {
    const double p_up = down / (hi.value - lo.value);
    return uniform_draw(mode.seed, draw_index) < p_up ? hi.code : lo.code;
  }
  if (down < up) return lo.code;
  if (up < down) return hi.code;
  // ties: the even code; the smaller magnitude when both share a parity
  if ((lo.code & 1) == (hi.code & 1)) return lo.code;
  return (lo.code & 1) == 0 ? lo.code : hi.code;
}

}  // namespace

// ---------------------------------------------------------------------------
// FixedFormat

FixedFormat::FixedFormat(int total_bits, int frac_bits)
    : total_bits_(total_bits), frac_bits_(frac_bits) {
  if (total_bits < 2 || total_bits > 32) {
    throw FormatError(fmt::format("fixed-point total_bits must be in [2, 32], got {}", total_bits));
  }
  if (frac_bits < 0 || frac_bits > total_bits - 1) {
    throw FormatError(fmt::format("fixed-point frac_bits must be in [0, {}], got {}",
                                  total_bits - 1, frac_bits));
  }
}

double FixedFormat::resolution() const noexcept { return std::ldexp(1.0, -frac_bits_); }
double FixedFormat::min_value() const noexcept {
  return std::ldexp(static_cast<double>(min_code()), -frac_bits_);
}
double FixedFormat::max_value() const noexcept {
  return std::ldexp(static_cast<double>(max_code()), -frac_bits_);
}

// ---------------------------------------------------------------------------
// MiniFloatFormat

MiniFloatFormat::MiniFloatFormat(int mantissa_bits, int exponent_bits, bool implicit_bit,
                                 std::optional<int> exponent_range, std::optional<int> bias)
    : m_(mantissa_bits), e_(exponent_bits), implicit_(implicit_bit), range_(exponent_range) {
  if (m_ < 0 || m_ > 23) {
    throw FormatError(fmt::format("mantissa bits must be in [0, 23], got {}", m_));
  }
  if (e_ < 0 || e_ > 8) {
    throw FormatError(fmt::format("exponent bits must be in [0, 8], got {}", e_));
  }
  if (m_ + e_ < 1) throw FormatError("minifloat needs at least one mantissa or exponent bit");
  if (!implicit_ && m_ == 0) {
    throw FormatError("a format without the implicit bit needs at least one mantissa bit");
  }
  if (range_) {
    if (*range_ < 1 || *range_ > (1 << e_)) {
      throw FormatError(fmt::format("exponent range must be in [1, {}] for a {}-bit exponent, got {}",
                                    1 << e_, e_, *range_));
    }
  }
  bias_ = bias.value_or(max_field());
  if (bias_ < -512 || bias_ > 512) {
    throw FormatError(fmt::format("exponent bias {} out of supported range [-512, 512]", bias_));
  }
}

MiniFloatFormat MiniFloatFormat::with_exponent_range(int mantissa_bits, int range,
                                                     bool implicit_bit) {
  if (range < 1 || range > 256) {
    throw FormatError(fmt::format("exponent range must be in [1, 256], got {}", range));
  }
  int e = 0;
  while ((1 << e) < range) ++e;
  return MiniFloatFormat(mantissa_bits, e, implicit_bit, range);
}

double MiniFloatFormat::max_value() const noexcept {
  const double top_fraction = static_cast<double>((std::int64_t{1} << m_) - 1);
  const double significand = (implicit_ ? std::ldexp(1.0, m_) : 0.0) + top_fraction;
  return std::ldexp(significand, max_exponent() - m_);
}

double MiniFloatFormat::min_positive() const noexcept {
  // Implicit formats give up (E_min, f = 0) to zero; the next pattern up is
  // (E_min, f = 1), or (E_min + 1, f = 0) when there are no fraction bits.
  if (implicit_) {
    if (m_ == 0) return std::ldexp(1.0, min_exponent() + 1);
    return std::ldexp(std::ldexp(1.0, m_) + 1.0, min_exponent() - m_);
  }
  return std::ldexp(1.0, min_exponent() - m_);
}

// ---------------------------------------------------------------------------
// WeightFormat helpers

WeightFormat weight_format_from_me(int mantissa_bits, int exponent_bits, bool implicit_bit) {
  if (exponent_bits == 0) return FixedFormat(mantissa_bits + 1, mantissa_bits);
  return MiniFloatFormat(mantissa_bits, exponent_bits, implicit_bit);
}

int format_width_bits(const WeightFormat& fmt) noexcept {
  return std::visit(Overloaded{[](const FixedFormat& f) { return f.total_bits(); },
                               [](const MiniFloatFormat& f) { return f.width(); }},
                    fmt);
}

// ---------------------------------------------------------------------------
// Bit fields

bool is_valid_code(Code code, const FixedFormat& fmt) noexcept {
  return code >= fmt.min_code() && code <= fmt.max_code();
}

bool is_valid_code(Code code, const MiniFloatFormat& fmt) noexcept {
  if (code < 0 || code >= (Code{1} << fmt.width())) return false;
  const int field = static_cast<int>((code >> fmt.mantissa_bits()) &
                                     ((Code{1} << fmt.exponent_bits()) - 1));
  return field <= fmt.max_field();
}

bool is_valid_code(Code code, const WeightFormat& fmt) noexcept {
  return std::visit([code](const auto& f) { return is_valid_code(code, f); }, fmt);
}

FloatFields unpack(Code code, const MiniFloatFormat& fmt) {
  if (!is_valid_code(code, fmt)) {
    throw FormatError(fmt::format("code {:#x} is not a valid pattern for {}", code, to_string(fmt)));
  }
  const int m = fmt.mantissa_bits();
  const int e = fmt.exponent_bits();
  FloatFields fields;
  fields.negative = ((code >> (m + e)) & 1) != 0;
  fields.exponent_field = static_cast<int>((code >> m) & ((Code{1} << e) - 1));
  fields.fraction = static_cast<std::uint32_t>(code & ((Code{1} << m) - 1));
  return fields;
}

Code pack(const FloatFields& fields, const MiniFloatFormat& fmt) {
  const int m = fmt.mantissa_bits();
  const int e = fmt.exponent_bits();
  if (fields.exponent_field < 0 || fields.exponent_field > fmt.max_field() ||
      fields.fraction >= (std::uint32_t{1} << m)) {
    throw FormatError("bit fields out of range for " + to_string(fmt));
  }
  return (Code{fields.negative ? 1 : 0} << (m + e)) |
         (Code{fields.exponent_field} << m) | Code{fields.fraction};
}

bool is_zero_code(Code code, const MiniFloatFormat& fmt) {
  const FloatFields f = unpack(code, fmt);
  if (fmt.implicit_bit()) return f.exponent_field == 0 && f.fraction == 0;
  return f.fraction == 0;
}

Significand significand_of(Code code, const MiniFloatFormat& fmt) {
  const FloatFields f = unpack(code, fmt);
  Significand s;
  s.negative = f.negative;
  s.exponent = f.exponent_field - fmt.bias();
  if (fmt.implicit_bit()) {
    s.magnitude = (f.exponent_field == 0 && f.fraction == 0)
                      ? 0
                      : (std::int64_t{1} << fmt.mantissa_bits()) + f.fraction;
  } else {
    s.magnitude = f.fraction;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Quantization

Code quantize_fixed(double x, const FixedFormat& fmt, const RoundingMode& mode,
                    std::uint64_t draw_index) {
  if (!std::isfinite(x)) throw DomainError("cannot quantize a non-finite value");
  const long double scaled = std::ldexp(static_cast<long double>(x), fmt.frac_bits());
  const long double lo = static_cast<long double>(fmt.min_code());
  const long double hi = static_cast<long double>(fmt.max_code());
  if (scaled <= lo) return fmt.min_code();
  if (scaled >= hi) return fmt.max_code();
  return static_cast<Code>(round_to_integer(scaled, mode, draw_index));
}

Code quantize_minifloat(double x, const MiniFloatFormat& fmt, const RoundingMode& mode,
                        std::uint64_t draw_index) {
  if (!std::isfinite(x)) throw DomainError("cannot quantize a non-finite value");
  const double magnitude = std::fabs(x);
  if (magnitude == 0.0) return 0;

  const int m = fmt.mantissa_bits();
  const Code sign_bit = Code{1} << (m + fmt.exponent_bits());
  const auto with_sign = [&](Code magnitude_code) {
    return (x < 0 && magnitude_code != 0) ? (magnitude_code | sign_bit) : magnitude_code;
  };

  const double max_value = fmt.max_value();
  const Code max_code = (Code{fmt.max_field()} << m) | ((Code{1} << m) - 1);
  if (magnitude >= max_value) return with_sign(max_code);

  // Each exponent E contributes the grid n * 2^(E-m) for n in
  // [base + f_min, base + 2^m - 1]. Only grids near floor(log2|x|) can hold
  // the bracketing neighbours; scanning E upwards keeps the smallest exponent
  // for values that several grids share, which is the canonical code.
  Candidate lo{0.0, 0};
  Candidate hi{max_value, max_code};
  const int e_min = fmt.min_exponent();
  const int e_max = fmt.max_exponent();
  const int center = std::ilogb(magnitude);
  const int first = std::clamp(center - 1, e_min, e_max);
  const int last = std::clamp(center + 2, e_min, e_max);
  const double base = fmt.implicit_bit() ? std::ldexp(1.0, m) : 0.0;
  const double top = base + std::ldexp(1.0, m) - 1.0;
  for (int exp = first; exp <= last; ++exp) {
    const double low_fraction = (fmt.implicit_bit() && exp != e_min) ? 0.0 : 1.0;
    const double bottom = base + low_fraction;
    if (bottom > top) continue;
    const double step = std::ldexp(1.0, exp - m);
    const double ratio = magnitude / step;
    const Code field_bits = Code{exp + fmt.bias()} << m;
    const double below = std::min(std::floor(ratio), top);
    if (below >= bottom) {
      const double v = below * step;
      if (v > lo.value) lo = {v, field_bits | static_cast<Code>(below - base)};
    }
    const double above = std::max(std::ceil(ratio), bottom);
    if (above <= top) {
      const double v = above * step;
      if (v < hi.value) hi = {v, field_bits | static_cast<Code>(above - base)};
    }
  }
  return with_sign(choose_neighbour(magnitude, lo, hi, mode, draw_index));
}

Code quantize(double x, const WeightFormat& fmt, const RoundingMode& mode,
              std::uint64_t draw_index) {
  return std::visit(
      Overloaded{
          [&](const FixedFormat& f) { return quantize_fixed(x, f, mode, draw_index); },
          [&](const MiniFloatFormat& f) { return quantize_minifloat(x, f, mode, draw_index); }},
      fmt);
}

// ---------------------------------------------------------------------------
// Decoding

double decode(Code code, const FixedFormat& fmt) {
  if (!is_valid_code(code, fmt)) {
    throw FormatError(fmt::format("code {} out of range for {}", code, to_string(fmt)));
  }
  return std::ldexp(static_cast<double>(code), -fmt.frac_bits());
}

double decode(Code code, const MiniFloatFormat& fmt) {
  const Significand s = significand_of(code, fmt);
  if (s.magnitude == 0) return 0.0;
  const double v = std::ldexp(static_cast<double>(s.magnitude), s.exponent - fmt.mantissa_bits());
  return s.negative ? -v : v;
}

double decode(Code code, const WeightFormat& fmt) {
  return std::visit([code](const auto& f) { return decode(code, f); }, fmt);
}

std::vector<double> enumerate_values(const WeightFormat& fmt) {
  const int width = format_width_bits(fmt);
  if (width > kMaxEnumerationWidth) {
    throw DomainError(fmt::format("refusing to enumerate a {}-bit format (limit {})", width,
                                  kMaxEnumerationWidth));
  }
  std::vector<double> values;
  values.reserve(std::size_t{1} << width);
  std::visit(Overloaded{[&](const FixedFormat& f) {
                          for (Code c = f.min_code(); c <= f.max_code(); ++c)
                            values.push_back(decode(c, f));
                        },
                        [&](const MiniFloatFormat& f) {
                          for (Code c = 0; c < (Code{1} << width); ++c)
                            if (is_valid_code(c, f)) values.push_back(decode(c, f));
                        }},
             fmt);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

// ---------------------------------------------------------------------------
// Descriptors

namespace {

class DescriptorParser {
 public:
  DescriptorParser(std::string_view original, std::string text)
      : original_(original), text_(std::move(text)) {}

  bool consume(std::string_view token) {
    if (std::string_view(text_).substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  void expect(std::string_view token) {
    if (!consume(token)) fail(fmt::format("expected '{}'", token));
  }

  int integer() {
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    bool negative = false;
    if (begin != end && *begin == '-') {
      negative = true;
      ++begin;
    }
    int value = 0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr == begin) fail("expected an integer");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return negative ? -value : value;
  }

  bool done() const { return pos_ == text_.size(); }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(fmt::format("bad format descriptor '{}' at offset {}: {}", original_, pos_, why));
  }

 private:
  std::string_view original_;
  std::string text_;
  std::size_t pos_ = 0;
};

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

FixedFormat build_fixed(DescriptorParser& p) {
  const int total = p.integer();
  p.expect("f");
  const int frac = p.integer();
  if (!p.done()) p.fail("unexpected trailing characters");
  try {
    return FixedFormat(total, frac);
  } catch (const FormatError& e) {
    p.fail(e.what());
  }
}

}  // namespace

WeightFormat parse_format(std::string_view descriptor) {
  DescriptorParser p(descriptor, lowercase(descriptor));
  if (p.consume("fixed:")) return build_fixed(p);
  if (!p.consume("float:")) p.fail("expected 'fixed:' or 'float:'");
  const int m = p.integer();
  p.expect("m");
  const int e = p.integer();
  p.expect("e");
  bool implicit = true;
  if (p.consume("+i")) {
    implicit = true;
  } else if (p.consume("-i")) {
    implicit = false;
  }
  std::optional<int> range;
  std::optional<int> bias;
  if (p.consume("r")) range = p.integer();
  if (p.consume("b")) bias = p.integer();
  if (!p.done()) p.fail("unexpected trailing characters");
  try {
    return MiniFloatFormat(m, e, implicit, range, bias);
  } catch (const FormatError& err) {
    p.fail(err.what());
  }
}

FixedFormat parse_fixed_format(std::string_view descriptor) {
  DescriptorParser p(descriptor, lowercase(descriptor));
  p.expect("fixed:");
  return build_fixed(p);
}

std::string to_string(const FixedFormat& fmt) {
  return fmt::format("fixed:{}f{}", fmt.total_bits(), fmt.frac_bits());
}

std::string to_string(const MiniFloatFormat& fmt) {
  std::string out = fmt::format("float:{}m{}e{}", fmt.mantissa_bits(), fmt.exponent_bits(),
                                fmt.implicit_bit() ? "+i" : "-i");
  if (fmt.exponent_range()) out += fmt::format("r{}", *fmt.exponent_range());
  if (!fmt.has_default_bias()) out += fmt::format("b{}", fmt.bias());
  return out;
}

std::string to_string(const WeightFormat& fmt) {
  return std::visit([](const auto& f) { return to_string(f); }, fmt);
}

}  // namespace mixedquant
