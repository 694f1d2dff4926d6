#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gfsr/error.hpp"
#include "gfsr/losses.hpp"
#include "oracles.hpp"

using namespace gfsr;

TEST(RelevanceLoss, ZeroAtTarget) {
  const std::vector<double> m = {0.0, 0.25, 1.0, 0.5};
  const auto r = relevance_loss(m, m, LossConfig{});
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.gradient) EXPECT_EQ(g, 0.0);
}

TEST(RelevanceLoss, DegenerateConfigs) {
  const std::vector<double> m = {1, 0}, s = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(relevance_loss(s, m, {1.0, 0.0, 2.0, 1.0}).value, 0.5);
  EXPECT_DOUBLE_EQ(relevance_loss(s, m, {0.0, 0.0, 2.0, 1.0}).value, 0.25);
}

TEST(RelevanceLoss, WorkedExample) {
  const auto r = relevance_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}, {0.5, 1.0, 2.0, 1.0});
  EXPECT_EQ(r.mae, 0.5);
  EXPECT_EQ(r.mse, 0.25);
  EXPECT_EQ(r.focal, 0.125);
  EXPECT_EQ(r.value, 0.5);
}

TEST(RelevanceLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.05, 0.95), cfgu(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(37), m(37);
    for (auto& v : s) v = u(gen);
    for (auto& v : m) v = u(gen);
    const LossConfig cfg{cfgu(gen), 2 * cfgu(gen), 1 + 2 * cfgu(gen), 1.0};
    const auto r = relevance_loss(s, m, cfg);
    EXPECT_NEAR(r.value, oracle::relevance_value(s, m, cfg), 1e-14);
    std::vector<double> numeric;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto up = s, down = s;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      numeric.push_back((oracle::relevance_value(up, m, cfg) - oracle::relevance_value(down, m, cfg)) / 2e-6);
    }
    EXPECT_LT(oracle::rel_error(r.gradient, numeric), 1e-6);
  }
}

TEST(RelevanceLoss, BoundedAndValidated) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0, 1);
  const LossConfig cfg{0.3, 1.5, 2.0, 1.0};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(8), m(8);
    for (auto& v : s) v = u(gen);
    for (auto& v : m) v = u(gen);
    const auto r = relevance_loss(s, m, cfg);
    EXPECT_GE(r.mae, 0);
    EXPECT_GE(r.focal, 0);
    EXPECT_LE(r.value, cfg.alpha + (1 - cfg.alpha) + cfg.beta);
  }
  EXPECT_THROW(relevance_loss(std::vector<double>{0.5}, std::vector<double>{0.5, 0.5}, cfg), Error);
  EXPECT_THROW(relevance_loss(std::vector<double>{1.5}, std::vector<double>{0.5}, cfg), Error);
  EXPECT_THROW((LossConfig{1.5, 1, 2, 1}.validate()), Error);
  EXPECT_THROW((LossConfig{0.5, -1, 2, 1}.validate()), Error);
}

TEST(Classification, BceValues) {
  EXPECT_NEAR(bce(0, 1).value, std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(bce(0, 1).gradient, -0.5);
  EXPECT_LT(bce(30, 1).value, 1e-12);
  EXPECT_NEAR(bce(-30, 1).value, 30.0, 1e-9);
  EXPECT_TRUE(std::isfinite(bce(-1000, 1).value));
}

TEST(Classification, SparseCeValues) {
  const std::vector<double> uniform(5, 0.3);
  EXPECT_NEAR(sparse_ce(uniform, 2).value, std::log(5.0), 1e-12);
  std::vector<double> z = {0, 30, 0};
  EXPECT_LT(sparse_ce(z, 1).value, 1e-12);
  const auto r = sparse_ce(std::vector<double>{0.1, -2, 3.3, 0.7}, 0);
  double total = 0;
  for (double g : r.gradient) total += g;
  EXPECT_NEAR(total, 0, 1e-15);
  EXPECT_THROW(sparse_ce(z, 3), Error);
}

TEST(Classification, BinaryUsesBceOnLogitGap) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0, 3);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> z = {n(gen), n(gen)};
    for (std::size_t y = 0; y < 2; ++y) {
      const auto binary = classification_loss(z, y);
      const auto ce = sparse_ce(z, y);
      EXPECT_NEAR(binary.value, ce.value, 1e-12);
      EXPECT_NEAR(binary.value, bce(z[1] - z[0], static_cast<int>(y)).value, 1e-15);
      EXPECT_NEAR(binary.gradient[0], ce.gradient[0], 1e-12);
      EXPECT_NEAR(binary.gradient[1], ce.gradient[1], 1e-12);
    }
  }
}

TEST(Classification, GradientsMatchFiniteDifferences) {
  const std::vector<double> z = {0.3, -1.2, 2.0};
  const auto r = sparse_ce(z, 2);
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto up = z, down = z;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(r.gradient[i], (sparse_ce(up, 2).value - sparse_ce(down, 2).value) / 2e-6, 1e-8);
  }
  const double g = (bce(0.7 + 1e-6, 0).value - bce(0.7 - 1e-6, 0).value) / 2e-6;
  EXPECT_NEAR(bce(0.7, 0).gradient, g, 1e-8);
}

TEST(TotalLoss, Weighting) {
  EXPECT_EQ(total_loss(0.3, 0.2, {0.5, 1, 2, 0.0}), 0.3);
  EXPECT_DOUBLE_EQ(total_loss(0.3, 0.2, LossConfig{}), 0.5);
  EXPECT_EQ(total_loss(0, 0, LossConfig{}), 0.0);
}
