#include "mixedquant/rounding.hpp"

#include <cmath>

namespace mixedquant {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  return mix64(mix64(seed) ^ (salt * 0xd6e8feb86659fd93ULL + 0x632be59bd9b4e019ULL));
}

double uniform_draw(std::uint64_t seed, std::uint64_t index) noexcept {
  const std::uint64_t bits = derive_seed(seed, index) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

long double round_to_integer(long double scaled, const RoundingMode& mode,
                             std::uint64_t index) noexcept {
  if (!mode.is_stochastic()) {
    // Default floating-point environment rounds to nearest, ties to even.
    return std::nearbyintl(scaled);
  }
  const long double lower = std::floor(scaled);
  const long double frac = scaled - lower;
  if (frac == 0.0L) return lower;
  return uniform_draw(mode.seed, index) < frac ? lower + 1.0L : lower;
}

}  // namespace mixedquant
