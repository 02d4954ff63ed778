//
// SPDX-License-Identifier: Apache-2.0
//

#include <random>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "support.hpp"
#include "trisec/metrics.hpp"

using namespace trisec;

namespace {

std::vector<double> as_double(const Tensor &t) {
  return {t.values().begin(), t.values().end()};
}

/// A random image and a noisy, partly rescaled copy of it.
std::pair<Tensor, Tensor> random_pair(std::mt19937 &gen) {
  const Tensor x = testing_support::random_image(gen);
  const float noise = 0.05f + 0.3f * unit_uniform(gen);
  Tensor y = add(mul_scalar(x, 0.8f), random_uniform(x.shape(), 0.0f, noise, gen));
  return {x, clamp(y, 0.0f, 1.0f)};
}

} // namespace

TEST(Correlation, SelfAndAntiCorrelation) {
  std::mt19937 gen(1);
  const Tensor x = testing_support::random_image(gen);
  EXPECT_NEAR(correlation(x, x), 1.0, 1e-12);
  Tensor inv = x;
  for (auto &v : inv.data())
    v = 1.0f - v;
  EXPECT_NEAR(correlation(x, inv), -1.0, 1e-6);
}

TEST(Correlation, MatchesBruteForceOracle) {
  std::mt19937 gen(2);
  for (int t = 0; t < 10; ++t) {
    const auto [x, y] = random_pair(gen);
    EXPECT_NEAR(correlation(x, y), oracle::pearson(as_double(x), as_double(y)),
                1e-10);
  }
}

TEST(Correlation, SymmetricAndAffineInvariant) {
  std::mt19937 gen(3);
  for (int t = 0; t < 10; ++t) {
    const auto [x, y] = random_pair(gen);
    EXPECT_NEAR(correlation(x, y), correlation(y, x), 1e-12);
    EXPECT_NEAR(correlation(x, add_scalar(mul_scalar(x, 0.5f), 0.2f)), 1.0, 1e-9);
  }
}

TEST(Correlation, Errors) {
  const Tensor flat(Shape{1, 4, 4}, 0.3f);
  std::mt19937 gen(4);
  const Tensor x = random_uniform({1, 4, 4}, 0.0f, 1.0f, gen);
  EXPECT_THROW(correlation(flat, x), DegenerateImageError);
  EXPECT_THROW(correlation(x, flat), DegenerateImageError);
  EXPECT_THROW(correlation(x, Tensor(Shape{1, 4, 5})), ShapeError);
  EXPECT_THROW(correlation(Tensor(Shape{1}), Tensor(Shape{1})), ShapeError);
}

TEST(Ssim, MatchesBruteForceOracle) {
  std::mt19937 gen(5);
  for (int t = 0; t < 10; ++t) {
    const auto [x, y] = random_pair(gen);
    EXPECT_NEAR(ssim(x, y), oracle::ssim(x, y), 1e-8);
  }
}

TEST(Ssim, MultiChannelAveragesChannels) {
  std::mt19937 gen(6);
  const Tensor x = random_uniform({3, 16, 16}, 0.0f, 1.0f, gen);
  const Tensor y = clamp(add(x, random_uniform(x.shape(), -0.1f, 0.1f, gen)), 0.0f, 1.0f);
  EXPECT_NEAR(ssim(x, y), oracle::ssim(x, y), 1e-8);
}

TEST(Ssim, IdentitySymmetryAndBound) {
  std::mt19937 gen(7);
  for (int t = 0; t < 10; ++t) {
    const auto [x, y] = random_pair(gen);
    EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
    EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-12);
    EXPECT_LT(ssim(x, y), 1.0);
  }
}

TEST(Ssim, LargerUniformShiftScoresLower) {
  std::mt19937 gen(8);
  const Tensor x = random_uniform({1, 28, 28}, 0.0f, 0.5f, gen);
  EXPECT_LT(ssim(x, add_scalar(x, 0.5f)), ssim(x, add_scalar(x, 0.1f)));
}

TEST(Ssim, TooSmallImageThrows) {
  EXPECT_THROW(ssim(Tensor(Shape{1, 10, 28}), Tensor(Shape{1, 10, 28})),
               ShapeError);
  EXPECT_THROW(ssim(Tensor(Shape{28, 28}), Tensor(Shape{28, 28})), ShapeError);
}

TEST(PerceptualScores, BundlesBothMetrics) {
  std::mt19937 gen(9);
  const auto [x, y] = random_pair(gen);
  const auto s = perceptual_scores(x, y);
  EXPECT_EQ(s.cr, correlation(x, y));
  EXPECT_EQ(s.ssi, ssim(x, y));
}
