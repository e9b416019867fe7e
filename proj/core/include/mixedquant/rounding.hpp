#pragma once

#include <cstdint>

namespace mixedquant {

/// How a real value is mapped onto the two representable neighbours that
/// bracket it.
///
/// Stochastic rounding is counter based: the draw for element `i` depends only
/// on (seed, i), so results are reproducible and independent of evaluation
/// order or thread count.
struct RoundingMode {
  enum class Kind { kNearestEven, kStochastic };

  Kind kind = Kind::kNearestEven;
  std::uint64_t seed = 0;

  static constexpr RoundingMode nearest() noexcept { return {}; }
  static constexpr RoundingMode stochastic(std::uint64_t seed) noexcept {
    return {Kind::kStochastic, seed};
  }

  constexpr bool is_stochastic() const noexcept { return kind == Kind::kStochastic; }

  friend constexpr bool operator==(const RoundingMode&, const RoundingMode&) = default;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines two 64-bit values into a derived seed (order sensitive).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// Uniform draw in [0, 1) with 53 random bits for element `index` of stream `seed`.
double uniform_draw(std::uint64_t seed, std::uint64_t index) noexcept;

/// Rounds `scaled` to an integer-valued long double. Nearest mode breaks ties
/// towards the even integer; stochastic mode rounds up with probability equal
/// to the fractional part.
long double round_to_integer(long double scaled, const RoundingMode& mode,
                             std::uint64_t index = 0) noexcept;

}  // namespace mixedquant
