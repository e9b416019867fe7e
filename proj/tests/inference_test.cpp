#include <gtest/gtest.h>

#include <random>

#include "mixedquant/error.hpp"
#include "mixedquant/fixture.hpp"
#include "mixedquant/inference.hpp"
#include "support/fixture_cache.hpp"

namespace mixedquant {
namespace {

Layer conv(std::string name, Conv2d c, Tensor w, std::optional<Tensor> b = std::nullopt) {
  return {std::move(name), c, std::move(w), std::move(b), std::nullopt};
}
Layer plain(std::string name, LayerKind k) { return {std::move(name), k, std::nullopt, std::nullopt, std::nullopt}; }
Layer fc(std::string name, std::size_t out, Tensor w, std::optional<Tensor> b = std::nullopt) {
  return {std::move(name), FullyConnected{out}, std::move(w), std::move(b), std::nullopt};
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sd);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = n(rng);
  return t;
}

TEST(Model, RejectsInconsistentShapes) {
  EXPECT_THROW(Model({1, 4, 4}, {fc("fc", 2, Tensor({2, 15}))}), ShapeError);
  EXPECT_THROW(Model({1, 4, 4}, {plain("relu", Relu{})}), ShapeError);
  EXPECT_THROW(Model({1, 4, 4}, {conv("c", Conv2d{2, 5, 5, 1, 0}, Tensor({2, 1, 5, 5}))}), ShapeError);
  EXPECT_THROW(Model({1, 4, 4}, {plain("p", MaxPool{0, 1}), fc("f", 1, Tensor({1, 16}))}), ShapeError);
  try {
    Model({1, 4, 4}, {conv("good", Conv2d{2, 3, 3, 1, 0}, Tensor({2, 1, 3, 3})),
                      fc("offending", 3, Tensor({3, 7}))});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("offending"), std::string::npos);
  }
}

TEST(Model, ShapesAndFanIn) {
  const Model m({1, 8, 8}, {conv("c", Conv2d{4, 3, 3, 1, 1}, Tensor({4, 1, 3, 3})), plain("r", Relu{}),
                            plain("p", MaxPool{2, 2}), plain("f", Flatten{}), fc("fc", 5, Tensor({5, 64}))});
  EXPECT_EQ(m.shape_at(1), (Shape{4, 8, 8}));
  EXPECT_EQ(m.shape_at(3), (Shape{4, 4, 4}));
  EXPECT_EQ(m.output_shape(), (Shape{5}));
  EXPECT_EQ(m.fan_in(0), 9u);
  EXPECT_EQ(m.fan_in(4), 64u);
}

TEST(Forward, IdentityKernelInBothModes) {
  const Model m({1, 3, 3}, {conv("id", Conv2d{1, 1, 1, 1, 0}, Tensor({1, 1, 1, 1}, {1.0}))});
  const Tensor x({1, 3, 3}, {0.5, -0.25, 0.625, 0.0, 0.125, -0.875, 0.75, 0.375, -0.5});
  EXPECT_EQ(forward(m, x, ReferenceMode{}), x);
  EXPECT_EQ(forward(m, x, QuantizedMode{}), x);
}

TEST(Forward, ReluInBothModes) {
  const Model m({3}, {fc("id", 3, Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})), plain("r", Relu{})});
  const Tensor x({3}, {-1.0, 0.0, 1.5});
  const Tensor expected({3}, {0.0, 0.0, 1.5});
  EXPECT_EQ(forward(m, x, ReferenceMode{}), expected);
  EXPECT_EQ(forward(m, x, QuantizedMode{}), expected);
}

TEST(Forward, ConvolutionMatchesDirectLoops) {
  const Conv2d c{3, 3, 2, 2, 1};
  const Tensor w = random_tensor({3, 2, 3, 2}, 1);
  const Tensor b = random_tensor({3}, 2);
  const Tensor x = random_tensor({2, 5, 6}, 3);
  const Model m({2, 5, 6}, {conv("c", c, w, b)});
  const Tensor y = forward_reference(m, x);
  const std::size_t oh = (5 + 2 - 3) / 2 + 1, ow = (6 + 2 - 2) / 2 + 1;
  ASSERT_EQ(y.shape(), (Shape{3, oh, ow}));
  for (std::size_t oc = 0; oc < 3; ++oc) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = b[oc];
        for (std::size_t ic = 0; ic < 2; ++ic) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 2; ++kx) {
              const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
              s += w[((oc * 2 + ic) * 3 + ky) * 2 + kx] * x[(ic * 5 + iy) * 6 + ix];
            }
          }
        }
        EXPECT_NEAR(y[(oc * oh + oy) * ow + ox], s, 1e-12);
      }
    }
  }
}

TEST(Forward, PoolingAndFlatten) {
  const Tensor x({1, 2, 4}, {1, -2, 3, 4, 5, 6, -7, 7});
  const Model mp({1, 2, 4}, {plain("p", MaxPool{2, 2}), plain("f", Flatten{}), fc("id", 2, Tensor({2, 2}, {1, 0, 0, 1}))});
  EXPECT_EQ(forward_reference(mp, x), Tensor({2}, {6, 7}));
  EXPECT_EQ(forward(mp, x, QuantizedMode{}), Tensor({2}, {6, 7}));
  const Model ap({1, 2, 4}, {plain("p", AvgPool{2, 2}), plain("f", Flatten{}), fc("id", 2, Tensor({2, 2}, {1, 0, 0, 1}))});
  EXPECT_EQ(forward_reference(ap, x), Tensor({2}, {2.5, 1.75}));
  EXPECT_EQ(forward(ap, x, QuantizedMode{}), Tensor({2}, {2.5, 1.75}));
}

TEST(Forward, InputShapeMismatch) {
  const Model m({3}, {fc("f", 1, Tensor({1, 3}, {1, 1, 1}))});
  EXPECT_THROW(forward(m, Tensor({4}), ReferenceMode{}), ShapeError);
  EXPECT_THROW(forward(m, Tensor({4}), QuantizedMode{}), ShapeError);
}

TEST(Evaluate, ReferenceOnSelfLabelledData) {
  const Fixture& f = testing::small_fixture();
  EXPECT_EQ(evaluate(f.model, f.dataset, ReferenceMode{}), 1.0);
  EXPECT_EQ(normalized_accuracy(f.model, f.dataset, ReferenceMode{}), 1.0);
}

TEST(Evaluate, AllZeroModelPicksClassZero) {
  const Model m({4}, {fc("f", 3, Tensor({3, 4}))});
  std::vector<Tensor> xs;
  std::vector<std::uint32_t> labels{0, 1, 0, 2, 0};
  for (int i = 0; i < 5; ++i) xs.push_back(random_tensor({4}, 40 + i));
  const LabeledSet set({4}, 3, xs, labels);
  EXPECT_EQ(evaluate(m, set, ReferenceMode{}), 0.6);
}

TEST(Evaluate, NormalizedAccuracyNeedsNonzeroReference) {
  const Model m({4}, {fc("f", 3, Tensor({3, 4}))});
  const LabeledSet set({4}, 3, {random_tensor({4}, 5)}, {2});
  EXPECT_THROW(normalized_accuracy(m, set, ReferenceMode{}), DomainError);
}

TEST(Evaluate, IndependentOfWorkerCount) {
  const Fixture& f = testing::small_fixture();
  QuantizedMode q;
  q.weight_format = FixedFormat(6, 5);
  const EvalResult one = evaluate_detailed(f.model, f.dataset, q, 1);
  for (const std::size_t w : {2u, 3u, 0u}) {
    const EvalResult r = evaluate_detailed(f.model, f.dataset, q, w);
    EXPECT_EQ(r.correct, one.correct);
    EXPECT_EQ(r.saturations, one.saturations);
  }
}

TEST(QuantizedNetwork, Deterministic) {
  const Fixture& f = testing::small_fixture();
  QuantizedMode q;
  q.rounding = RoundingMode::stochastic(77);
  const auto a = QuantizedNetwork::build(f.model, q, f.dataset.samples());
  const auto b = QuantizedNetwork::build(f.model, q, f.dataset.samples());
  for (std::size_t i = 0; i < 10; ++i) {
    const auto ra = a.forward(f.dataset.samples()[i]);
    const auto rb = b.forward(f.dataset.samples()[i]);
    ASSERT_EQ(ra.output, rb.output);
    ASSERT_EQ(ra.logits, rb.logits);
  }
}

TEST(QuantizedNetwork, StochasticSeedChangesWeights) {
  const Fixture& f = testing::small_fixture();
  QuantizedMode a, b;
  a.weight_format = b.weight_format = MiniFloatFormat(1, 4);
  a.rounding = RoundingMode::stochastic(1);
  b.rounding = RoundingMode::stochastic(2);
  const auto na = QuantizedNetwork::build(f.model, a, f.dataset.samples());
  const auto nb = QuantizedNetwork::build(f.model, b, f.dataset.samples());
  EXPECT_NE(na.stages()[0].weights->codes, nb.stages()[0].weights->codes);
}

TEST(QuantizedNetwork, CalibratedFormats) {
  EXPECT_EQ(calibrated_frac_bits(1.0, 16), 15);
  EXPECT_EQ(calibrated_frac_bits(0.9, 16), 15);
  EXPECT_EQ(calibrated_frac_bits(1.5, 16), 14);
  EXPECT_EQ(calibrated_frac_bits(6.75, 16), 12);
  EXPECT_EQ(calibrated_frac_bits(1e-9, 16), 15);
  EXPECT_EQ(calibrated_frac_bits(1e9, 16), 0);
  EXPECT_EQ(calibrated_frac_bits(0.0, 16), 15);
}

TEST(QuantizedNetwork, ComposesAcrossSlices) {
  const Fixture& f = testing::small_fixture();
  QuantizedMode q;
  q.weight_format = MiniFloatFormat(2, 3);
  const auto net = QuantizedNetwork::build(f.model, q, f.dataset.samples());
  for (const std::size_t cut : {1u, 3u, 4u, 5u}) {
    for (std::size_t i = 0; i < 5; ++i) {
      const ActTensor in = net.quantize_input(f.dataset.samples()[i]);
      const ActTensor whole = net.run(in, 0, net.size());
      const ActTensor left = net.run(in, 0, cut);
      EXPECT_EQ(net.run(left, cut, net.size()), whole);
    }
  }
}

TEST(ReferenceForward, ComposesAcrossSlices) {
  const Fixture& f = testing::small_fixture();
  const Model front = f.model.slice(0, 5);
  const Model back = f.model.slice(5, f.model.size());
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor& x = f.dataset.samples()[i];
    const std::vector<Tensor> trace = forward_reference_trace(f.model, x);
    const Tensor mid = forward_reference(front, x);
    EXPECT_EQ(mid, trace[5]);
    EXPECT_EQ(forward_reference(back, mid), trace.back());
    EXPECT_EQ(trace.back(), forward_reference(f.model, x));
  }
}

TEST(QuantizedNetwork, ReusesStoredQuantizedWeights) {
  const Fixture& f = testing::small_fixture();
  std::vector<Layer> layers = f.model.layers();
  const WeightFormat fmt = MiniFloatFormat(3, 4);
  QTensor stored = quantize_tensor(*layers[0].weights, fmt);
  stored.codes[0] = stored.codes[0] ^ 1;  // differs from what requantizing would give
  layers[0].quantized = stored;
  const Model m(f.model.input_shape(), layers);
  QuantizedMode q;
  q.weight_format = fmt;
  const auto net = QuantizedNetwork::build(m, q, f.dataset.samples());
  EXPECT_EQ(*net.stages()[0].weights, stored);
  q.weight_format = MiniFloatFormat(2, 4);
  const auto other = QuantizedNetwork::build(m, q, f.dataset.samples());
  EXPECT_NE(other.stages()[0].weights->format, fmt);
}

TEST(FixtureAccuracy, WideFormatsMatchReferenceEverywhere) {
  const Fixture& f = testing::default_fixture();
  QuantizedMode q;
  q.weight_format = MiniFloatFormat(20, 6);
  q.act_bits = 24;
  const auto net = QuantizedNetwork::build(f.model, q, f.dataset.samples());
  for (std::size_t i = 0; i < f.dataset.size(); ++i) {
    const Tensor& x = f.dataset.samples()[i];
    ASSERT_EQ(argmax(net.forward(x).logits.data()), argmax(forward_reference(f.model, x).data())) << i;
  }
}

TEST(FixtureAccuracy, ThreeBitFixedCollapses) {
  const Fixture& f = testing::default_fixture();
  QuantizedMode q;
  q.weight_format = FixedFormat(3, 2);
  EXPECT_LT(normalized_accuracy(f.model, f.dataset, q), 0.5);
}

TEST(FixtureAccuracy, FloatThreeFourKeepsAccuracy) {
  const Fixture& f = testing::default_fixture();
  QuantizedMode q;
  q.weight_format = MiniFloatFormat(3, 4);
  const auto net = QuantizedNetwork::build(f.model, q, f.dataset.samples());
  std::size_t agree = 0;
  for (const Tensor& x : f.dataset.samples()) {
    agree += argmax(net.forward(x).logits.data()) == argmax(forward_reference(f.model, x).data());
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(f.dataset.size()), 0.99);
  EXPECT_GE(normalized_accuracy(f.model, f.dataset, q), 0.99);
}

TEST(FixtureAccuracy, MoreMantissaBitsDoNotHurt) {
  const Fixture& f = testing::default_fixture();
  for (const int e : {3, 4}) {
    std::vector<double> acc;
    for (int m = 1; m <= 7; ++m) {
      QuantizedMode q;
      q.weight_format = MiniFloatFormat(m, e);
      acc.push_back(evaluate(f.model, f.dataset, q));
    }
    for (std::size_t m = 0; m + 2 < acc.size(); ++m) {
      EXPECT_GE(acc[m + 2], acc[m] - 0.02) << "e=" << e << " m=" << m + 1;
    }
  }
}

}  // namespace
}  // namespace mixedquant
