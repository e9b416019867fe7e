#include <gtest/gtest.h>

#include "mixedquant/analysis.hpp"
#include "mixedquant/error.hpp"
#include "mixedquant/fixture.hpp"
#include "mixedquant/model_io.hpp"
#include "support/fixture_cache.hpp"
#include "support/temp_dir.hpp"

namespace mixedquant {
namespace {

const Tensor& conv_weights(const Fixture& f) { return *f.model.layers()[0].weights; }

TEST(Fixture, DefaultArchitecture) {
  const Fixture& f = testing::default_fixture();
  EXPECT_EQ(f.model.input_shape(), (Shape{1, 16, 16}));
  ASSERT_EQ(f.model.size(), 7u);
  EXPECT_EQ(f.model.layers()[0].kind, LayerKind(Conv2d{8, 5, 5, 1, 0}));
  EXPECT_EQ(conv_weights(f).shape(), (Shape{8, 1, 5, 5}));
  EXPECT_TRUE(std::holds_alternative<Relu>(f.model.layers()[1].kind));
  EXPECT_TRUE(std::holds_alternative<MaxPool>(f.model.layers()[2].kind));
  EXPECT_TRUE(std::holds_alternative<FullyConnected>(f.model.layers()[4].kind));
  EXPECT_TRUE(std::holds_alternative<FullyConnected>(f.model.layers()[6].kind));
  EXPECT_EQ(f.model.output_shape(), (Shape{10}));
  EXPECT_EQ(f.dataset.class_count(), 10u);
  EXPECT_EQ(f.dataset.size(), FixtureSpec{}.samples);
}

TEST(Fixture, SameSeedIsByteIdentical) {
  const Fixture a = generate_fixture(99);
  const Fixture b = generate_fixture(99);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.dataset, b.dataset);
  testing::TempDir dir;
  save_model(a.model, dir.path() / "a");
  save_model(b.model, dir.path() / "b");
  EXPECT_EQ(checksum_listing(dir.path() / "a"), checksum_listing(dir.path() / "b"));
  EXPECT_EQ(encode_dataset(a.dataset), encode_dataset(b.dataset));
}

TEST(Fixture, DifferentSeedsDiffer) {
  const Fixture a = generate_fixture(1);
  const Fixture b = generate_fixture(2);
  EXPECT_NE(conv_weights(a), conv_weights(b));
}

TEST(Fixture, WeightsAreFloat32) {
  const Fixture& f = testing::default_fixture();
  for (const Layer& l : f.model.layers()) {
    for (const auto* t : {l.weights ? &*l.weights : nullptr, l.bias ? &*l.bias : nullptr}) {
      if (!t) continue;
      for (const double v : t->data()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
    }
  }
  for (const Tensor& x : f.dataset.samples()) {
    for (const double v : x.data()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(Fixture, ReferenceAccuracyIsOne) {
  const Fixture& f = testing::default_fixture();
  EXPECT_EQ(evaluate(f.model, f.dataset, ReferenceMode{}), 1.0);
}

TEST(Fixture, LabelsAreBalancedAndMarginsHold) {
  const FixtureSpec spec;
  const Fixture& f = testing::default_fixture();
  std::vector<std::size_t> counts(spec.classes, 0);
  for (std::size_t i = 0; i < f.dataset.size(); ++i) {
    const Tensor logits = forward_reference(f.model, f.dataset.samples()[i]);
    std::vector<double> v(logits.data().begin(), logits.data().end());
    std::sort(v.begin(), v.end());
    const double gap = (v[v.size() - 1] - v[v.size() - 2]) / (v.back() - v.front());
    EXPECT_GE(gap, spec.min_margin) << i;
    ++counts[f.dataset.labels()[i]];
  }
  for (std::size_t k = 0; k < spec.classes; ++k) {
    EXPECT_EQ(counts[k], spec.samples / spec.classes + (k < spec.samples % spec.classes ? 1 : 0)) << k;
  }
}

TEST(Fixture, ConvHistogramPeaksInSmallExponents) {
  const Fixture& f = testing::default_fixture();
  const ExponentHistogram h = exponent_histogram(normalize_layer(conv_weights(f)).tensor);
  ASSERT_TRUE(h.mode().has_value());
  EXPECT_LE(*h.mode(), -4);
  std::size_t small = 0;
  for (const auto& [e, n] : h.bins) small += (e <= -4 && e >= -9) ? n : 0;
  EXPECT_GT(static_cast<double>(small) / static_cast<double>(h.total()), 0.5);
}

TEST(Fixture, FourBitFixedZeroesMostConvWeights) {
  const Fixture& f = testing::default_fixture();
  EXPECT_GE(zero_fraction(conv_weights(f), FixedFormat(4, 3)), 0.5);
}

TEST(Fixture, RejectsDegenerateSpecs) {
  const auto with = [](auto edit) {
    FixtureSpec s;
    s.samples = 20;
    edit(s);
    return s;
  };
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.conv_channels = 0; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.hidden = 0; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.input_size = 0; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.kernel = 17; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.pool = 13; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.classes = 1; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.samples = 0; })), DomainError);
  EXPECT_THROW(generate_fixture(1, with([](FixtureSpec& s) { s.min_margin = 1.0; })), DomainError);
  EXPECT_NO_THROW(generate_fixture(1, with([](FixtureSpec&) {})));
}

}  // namespace
}  // namespace mixedquant
