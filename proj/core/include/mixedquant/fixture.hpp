#pragma once

// Deterministic desk-scale CNN fixtures.
//
// Each weight is zero-mean Gaussian with a log-normally distributed standard
// deviation (a Gaussian scale mixture). The conv layer gets a heavy tail and a
// per-channel scale, so after normalization most of its magnitudes sit several
// binades below the layer maximum, while the fc layers stay close to Gaussian.
// Samples are Gaussian noise images labelled by the reference argmax of the
// generated model, so reference accuracy is 1 by construction. The output
// bias standardizes every class logit over a calibration pool so labels spread
// across classes, and samples whose top-two logit gap is below `min_margin` of
// the logit range are redrawn.

#include <cstddef>
#include <cstdint>

#include "mixedquant/dataset.hpp"
#include "mixedquant/model.hpp"

namespace mixedquant {

/// Seed used by the tools when none is given.
inline constexpr std::uint64_t kDefaultFixtureSeed = 20170724;

struct FixtureSpec {
  std::size_t input_size = 16;  // square, single channel
  std::size_t conv_channels = 8;
  std::size_t kernel = 5;
  std::size_t pool = 2;
  std::size_t hidden = 32;
  std::size_t classes = 10;
  std::size_t samples = 400;
  /// Standard deviation of log2 of the per-weight scale, conv layer.
  double conv_weight_log2_spread = 1.75;
  /// Standard deviation of log2 of the per-weight scale, fc layers.
  double fc_weight_log2_spread = 0.0;
  /// Standard deviation of log2 of the per-channel scale of the conv layer.
  double channel_log2_spread = 0.5;
  /// Standard deviation of log2 of the per-unit scale of the hidden layer.
  double hidden_log2_spread = 0.0;
  /// Relative top-two logit gap every sample must clear, in [0, 1).
  double min_margin = 0.3;
};

struct Fixture {
  Model model;
  LabeledSet dataset;
};

/// Throws DomainError for a degenerate spec (zero-size layer, kernel or pool
/// larger than its input, fewer than two classes, no samples).
Fixture generate_fixture(std::uint64_t seed, const FixtureSpec& spec = {});

}  // namespace mixedquant
