#pragma once

// Published normalized accuracies for ImageNet-scale networks, kept as
// reference metadata. They are only meaningful for a real pretrained network
// imported through model_io; the desk-scale fixture does not reproduce them.

#include <optional>
#include <span>
#include <string_view>

namespace mixedquant {

struct PublishedTarget {
  std::string_view network;
  int mantissa_bits;
  /// 0 denotes fixed point with mantissa_bits + 1 total bits.
  int exponent_bits;
  double normalized_accuracy;
};

/// AlexNet, m = 1..10 by e = 0..5 (floats with the implicit bit).
std::span<const PublishedTarget> alexnet_grid_targets();
/// AlexNet, SqueezeNet, GoogLeNet and VGG-16 at (7,0), (10,0) and (3,4).
std::span<const PublishedTarget> cross_network_targets();

/// Searches both tables; the AlexNet grid takes precedence on overlap.
std::optional<double> published_accuracy(std::string_view network, int mantissa_bits,
                                         int exponent_bits);

}  // namespace mixedquant
