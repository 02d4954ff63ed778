//
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracle.hpp"
#include "support.hpp"
#include "trisec/network.hpp"

using namespace trisec;
using testing_support::load_fixture;

namespace {

NetworkSpec zero_dense_net() {
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make_dense(Tensor(Shape{10, 4}), Tensor(Shape{10})));
  layers.push_back(Layer::make(LayerKind::softmax));
  return NetworkSpec::build({1, 2, 2}, std::move(layers), 10);
}

std::vector<std::size_t> random_coords(std::mt19937 &gen, std::size_t n,
                                       std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(static_cast<std::size_t>(unit_uniform(gen) * n) % n);
  return out;
}

} // namespace

TEST(NetworkSpec, RejectsSoftmaxBeforeTheEnd) {
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make(LayerKind::softmax));
  layers.push_back(Layer::make_dense(Tensor(Shape{10, 4}), Tensor(Shape{10})));
  EXPECT_THROW(NetworkSpec::build({1, 2, 2}, std::move(layers), 10),
               ModelValidationError);
}

TEST(NetworkSpec, RejectsBrokenShapeChain) {
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make_dense(Tensor(Shape{10, 5}), Tensor(Shape{10})));
  layers.push_back(Layer::make(LayerKind::softmax));
  EXPECT_THROW(NetworkSpec::build({1, 2, 2}, std::move(layers), 10),
               ModelValidationError);
}

TEST(NetworkSpec, RejectsMissingSoftmaxAndWrongClassCount) {
  std::vector<Layer> a;
  a.push_back(Layer::make(LayerKind::flatten));
  a.push_back(Layer::make_dense(Tensor(Shape{10, 4}), Tensor(Shape{10})));
  EXPECT_THROW(NetworkSpec::build({1, 2, 2}, std::move(a), 10),
               ModelValidationError);
  std::vector<Layer> b;
  b.push_back(Layer::make(LayerKind::flatten));
  b.push_back(Layer::make_dense(Tensor(Shape{10, 4}), Tensor(Shape{10})));
  b.push_back(Layer::make(LayerKind::softmax));
  EXPECT_THROW(NetworkSpec::build({1, 2, 2}, std::move(b), 9),
               ModelValidationError);
}

TEST(Forward, ZeroNetGivesUniformDistribution) {
  const auto trace = forward(zero_dense_net(), Tensor(Shape{1, 2, 2}));
  for (float v : trace.output().data())
    EXPECT_NEAR(v, 0.1f, 1e-7);
}

TEST(Forward, ReluStage) {
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make(LayerKind::relu));
  layers.push_back(Layer::make(LayerKind::softmax));
  const auto net = NetworkSpec::build({1, 1, 2}, std::move(layers), 2);
  const auto trace = forward(net, Tensor(Shape{1, 1, 2}, std::vector<float>{-1, 2}));
  EXPECT_EQ(trace.activations[2], Tensor::vector({0, 2}));
}

TEST(Forward, ShapeMismatchThrows) {
  EXPECT_THROW(forward(zero_dense_net(), Tensor(Shape{1, 3, 3})), ShapeError);
}

TEST(Forward, MatchesIndependentScriptedForward) {
  // Golden distributions were produced by tests/oracle/golden_forward.py,
  // a separate numpy implementation of the model format.
  for (const char *stem : {"mlp_tiny", "cnn_tiny", "mixed_tiny"}) {
    SCOPED_TRACE(stem);
    const auto net = load_fixture(stem);
    std::ifstream in(testing_support::fixture_dir() /
                     (std::string("golden_") + stem + ".json"));
    ASSERT_TRUE(in) << "missing golden file";
    const auto golden = nlohmann::json::parse(in);
    ASSERT_FALSE(golden["cases"].empty());
    for (const auto &c : golden["cases"]) {
      const auto x = load_image(testing_support::fixture_dir() / "images" /
                                c["image"].get<std::string>());
      const Tensor out = predict(net, x);
      const auto expected = c["output"].get<std::vector<double>>();
      ASSERT_EQ(expected.size(), out.size());
      for (std::size_t j = 0; j < out.size(); ++j)
        EXPECT_NEAR(out[j], expected[j], 1e-5);
      EXPECT_EQ(argmax(out), c["top1"].get<std::size_t>());
    }
  }
}

TEST(Forward, SoftmaxNormalizedAndDeterministic) {
  std::mt19937 gen(3);
  for (const char *stem : {"mlp_tiny", "cnn_tiny", "mixed_tiny"}) {
    const auto net = load_fixture(stem);
    for (int t = 0; t < 10; ++t) {
      const Tensor x = testing_support::random_image(gen);
      const auto a = forward(net, x);
      const auto b = forward(net, x);
      EXPECT_NEAR(sum(a.output()), 1.0, 1e-6);
      for (float v : a.output().data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
      for (std::size_t i = 0; i < a.activations.size(); ++i)
        EXPECT_EQ(a.activations[i], b.activations[i]);
    }
  }
}

TEST(Forward, LinearNetLogitsScaleWithInput) {
  std::mt19937 gen(11);
  std::vector<Layer> layers;
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make_dense(random_uniform({16, 36}, -0.3f, 0.3f, gen),
                                     Tensor(Shape{16})));
  layers.push_back(Layer::make_dense(random_uniform({5, 16}, -0.3f, 0.3f, gen),
                                     Tensor(Shape{5})));
  layers.push_back(Layer::make(LayerKind::softmax));
  const auto net = NetworkSpec::build({1, 6, 6}, std::move(layers), 5);
  const Tensor x = random_uniform({1, 6, 6}, 0.0f, 1.0f, gen);
  for (float alpha : {0.25f, 0.5f, 2.0f}) {
    const Tensor z1 = forward(net, x).logits();
    const Tensor z2 = forward(net, mul_scalar(x, alpha)).logits();
    for (std::size_t j = 0; j < z1.size(); ++j)
      EXPECT_NEAR(z2[j], alpha * z1[j], 1e-5);
  }
}

TEST(InputGradient, ZeroWhenOutputEqualsTarget) {
  const auto net = load_fixture("mlp_tiny");
  const auto trace = forward(net, testing_support::probe(0));
  const Tensor g = input_gradient(net, trace, trace.output());
  // The target is the float copy of the output, so only its rounding
  // residual is left to differentiate.
  EXPECT_LT(linf_norm(g), 1e-6f);
}

TEST(InputGradient, StaleTraceThrows) {
  const auto mlp = load_fixture("mlp_tiny");
  const auto cnn = load_fixture("cnn_tiny");
  const auto trace = forward(cnn, testing_support::probe(0));
  EXPECT_THROW(input_gradient(mlp, trace, one_hot(10, 0)), ShapeError);
}

TEST(InputGradient, MatchesFiniteDifferencesOnMlp) {
  const auto net = load_fixture("mlp_tiny");
  std::mt19937 gen(5);
  const Tensor x = testing_support::random_image(gen);
  const std::size_t target = 3;
  const Tensor g = input_gradient(net, forward(net, x), one_hot(10, target));
  const auto r = oracle::fd_check(net, x, target, g,
                                  random_coords(gen, x.size(), 400), 100);
  EXPECT_EQ(r.checked, 100u);
  EXPECT_GE(r.scale, 1e-3);
  EXPECT_LE(r.max_rel, 1e-4);
}

TEST(InputGradient, AgreesPerCoordinateWithFineDifferences) {
  // With a small step the difference quotient's truncation error is
  // negligible, so every component must match on its own terms.
  std::mt19937 gen(17);
  for (const char *stem : {"mlp_tiny", "cnn_tiny", "mixed_tiny"}) {
    const auto net = load_fixture(stem);
    for (std::size_t p = 0; p < 3; ++p) {
      SCOPED_TRACE(std::string(stem) + " probe " + std::to_string(p));
      const Tensor x = testing_support::probe(p);
      const std::size_t target =
          testing_support::paired_target(p, argmax(predict(net, x)));
      const Tensor g = input_gradient(net, forward(net, x), one_hot(10, target));
      const auto r = oracle::fd_check(net, x, target, g,
                                      random_coords(gen, x.size(), 400), 100, 1e-5);
      EXPECT_EQ(r.checked, 100u);
      EXPECT_LE(r.max_componentwise, 1e-5);
    }
  }
}

TEST(InputGradient, ConvIdentityMatchesDenseEquivalent) {
  std::mt19937 gen(13);
  const Tensor head_w = random_uniform({10, 49}, -0.5f, 0.5f, gen);
  const Tensor head_b = random_uniform({10}, -0.1f, 0.1f, gen);

  std::vector<Layer> conv_layers;
  conv_layers.push_back(Layer::make_conv2d(
      Tensor(Shape{1, 1, 1, 1}, std::vector<float>{1.0f}), Tensor(Shape{1})));
  conv_layers.push_back(Layer::make(LayerKind::flatten));
  conv_layers.push_back(Layer::make_dense(head_w, head_b));
  conv_layers.push_back(Layer::make(LayerKind::softmax));
  const auto conv_net = NetworkSpec::build({1, 7, 7}, std::move(conv_layers), 10);

  Tensor eye(Shape{49, 49});
  for (std::size_t i = 0; i < 49; ++i)
    eye[i * 49 + i] = 1.0f;
  std::vector<Layer> dense_layers;
  dense_layers.push_back(Layer::make(LayerKind::flatten));
  dense_layers.push_back(Layer::make_dense(eye, Tensor(Shape{49})));
  dense_layers.push_back(Layer::make_dense(head_w, head_b));
  dense_layers.push_back(Layer::make(LayerKind::softmax));
  const auto dense_net =
      NetworkSpec::build({1, 7, 7}, std::move(dense_layers), 10);

  for (int t = 0; t < 5; ++t) {
    const Tensor x = random_uniform({1, 7, 7}, 0.0f, 1.0f, gen);
    const Tensor y = one_hot(10, static_cast<std::size_t>(t));
    const Tensor a = input_gradient(conv_net, forward(conv_net, x), y);
    const Tensor b = input_gradient(dense_net, forward(dense_net, x), y);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST(InputGradient, MaxPoolRoutesToFirstMaximumOnTies) {
  std::vector<Layer> layers;
  layers.push_back(Layer::make_maxpool2d(2, 2, 2));
  layers.push_back(Layer::make(LayerKind::flatten));
  layers.push_back(Layer::make_dense(Tensor(Shape{2, 1}, std::vector<float>{1, -1}),
                                     Tensor(Shape{2})));
  layers.push_back(Layer::make(LayerKind::softmax));
  const auto net = NetworkSpec::build({1, 2, 2}, std::move(layers), 2);
  const Tensor x(Shape{1, 2, 2}, std::vector<float>{0.5f, 0.5f, 0.5f, 0.2f});
  const Tensor g = input_gradient(net, forward(net, x), one_hot(2, 1));
  EXPECT_NE(g[0], 0.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_EQ(g[2], 0.0f);
  EXPECT_EQ(g[3], 0.0f);
}
