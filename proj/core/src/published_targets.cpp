#include "mixedquant/published_targets.hpp"

#include <array>

namespace mixedquant {
namespace {

constexpr std::array<std::array<double, 6>, 10> kAlexGrid{{
    {0.002, 0.002, 0.003, 0.920, 0.918, 0.918},
    {0.003, 0.003, 0.003, 0.983, 0.982, 0.982},
    {0.002, 0.003, 0.003, 0.995, 0.995, 0.995},
    {0.016, 0.003, 0.003, 0.997, 1.001, 1.001},
    {0.775, 0.002, 0.003, 0.994, 0.999, 0.998},
    {0.979, 0.002, 0.003, 0.995, 0.999, 0.999},
    {0.996, 0.002, 0.003, 0.995, 0.999, 0.999},
    {0.998, 0.002, 0.003, 0.995, 1.000, 1.000},
    {1.001, 0.002, 0.003, 0.995, 1.000, 1.000},
    {0.999, 0.002, 0.003, 0.995, 1.001, 1.001},
}};

constexpr auto make_alex_targets() {
  std::array<PublishedTarget, 60> out{};
  for (int m = 1; m <= 10; ++m) {
    for (int e = 0; e <= 5; ++e) {
      out[static_cast<std::size_t>((m - 1) * 6 + e)] =
          PublishedTarget{"AlexNet", m, e, kAlexGrid[m - 1][e]};
    }
  }
  return out;
}

constexpr auto kAlexTargets = make_alex_targets();

constexpr std::array<PublishedTarget, 12> kCrossTargets{{
    {"AlexNet", 7, 0, 1.00},
    {"SqueezeNet", 7, 0, 1.00},
    {"GoogLeNet", 7, 0, 0.85},
    {"VGG-16", 7, 0, 0.02},
    {"AlexNet", 10, 0, 1.00},
    {"SqueezeNet", 10, 0, 0.99},
    {"GoogLeNet", 10, 0, 0.99},
    {"VGG-16", 10, 0, 1.00},
    {"AlexNet", 3, 4, 0.99},
    {"SqueezeNet", 3, 4, 0.99},
    {"GoogLeNet", 3, 4, 0.99},
    {"VGG-16", 3, 4, 1.00},
}};

std::optional<double> find(std::span<const PublishedTarget> table, std::string_view network, int m,
                           int e) {
  for (const PublishedTarget& t : table) {
    if (t.network == network && t.mantissa_bits == m && t.exponent_bits == e) {
      return t.normalized_accuracy;
    }
  }
  return std::nullopt;
}

}  // namespace

std::span<const PublishedTarget> alexnet_grid_targets() { return kAlexTargets; }
std::span<const PublishedTarget> cross_network_targets() { return kCrossTargets; }

std::optional<double> published_accuracy(std::string_view network, int mantissa_bits,
                                         int exponent_bits) {
  if (auto v = find(kAlexTargets, network, mantissa_bits, exponent_bits)) return v;
  return find(kCrossTargets, network, mantissa_bits, exponent_bits);
}

}  // namespace mixedquant
