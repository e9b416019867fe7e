#pragma once

#include "mixedquant/fixture.hpp"

namespace mixedquant::testing {

/// The fixture the tools generate by default.
inline const Fixture& default_fixture() {
  static const Fixture f = generate_fixture(kDefaultFixtureSeed);
  return f;
}

/// A cheaper fixture for structural tests.
inline const Fixture& small_fixture() {
  static const Fixture f = [] {
    FixtureSpec spec;
    spec.input_size = 10;
    spec.conv_channels = 4;
    spec.kernel = 3;
    spec.hidden = 16;
    spec.classes = 4;
    spec.samples = 40;
    return generate_fixture(3, spec);
  }();
  return f;
}

}  // namespace mixedquant::testing
