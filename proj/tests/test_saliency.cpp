#include <gtest/gtest.h>

#include <random>

#include "gfsr/error.hpp"
#include "gfsr/saliency.hpp"
#include "oracles.hpp"

using namespace gfsr;

namespace {

// conv 1x1 with unit weight (A = input), then a dense head whose first row
// sums the map.
BasicNetwork<double> summing_net() {
  auto arch = oracle::tiny_arch("layer c conv 1 1 0\nlayer out dense 2\n", "c", 1, 4);
  auto net = init_network<double>(arch, 1);
  net.params[0].weight.fill(1.0);
  net.params[0].bias.fill(0.0);
  auto& head = net.params[1].weight;
  for (std::size_t i = 0; i < 16; ++i) head[i] = 1.0;
  return net;
}

}  // namespace

TEST(GradCam, SummingHeadGivesNormalisedPositivePart) {
  const auto net = summing_net();
  Tensor<double> x({1, 4, 4});
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-1, 2);
  for (auto& v : x.values()) v = u(gen);
  const auto cam = gradcam(net, x, 0, "c");
  ASSERT_EQ(cam.parts.alpha.size(), 1u);
  EXPECT_NEAR(cam.parts.alpha[0], 1.0, 1e-12);
  double top = 0;
  for (double v : x.values()) top = std::max(top, v);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(cam.map.values.values[i], std::max(x[i], 0.0) / top, 1e-12);
}

TEST(GradCam, ScalingActivationsLeavesMapUnchanged) {
  const auto net = summing_net();
  const auto x = oracle::random_tensor<double>({1, 4, 4}, 8, 0, 1);
  auto scaled = x;
  for (auto& v : scaled.values()) v *= 3.7;
  const auto a = gradcam(net, x, 0, "c"), b = gradcam(net, scaled, 0, "c");
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(a.map.values.values[i], b.map.values.values[i], 1e-12);
  EXPECT_NEAR(b.parts.norm_max, 3.7 * a.parts.norm_max, 1e-12);
}

TEST(GradCam, ZeroGradientAndNegativeWeightGiveZeroMap) {
  const std::vector<double> act = {1, 2, 3, 4};
  const auto zero = gradcam_from_parts(act, std::vector<double>(4, 0.0), 1, 2, 2);
  const auto negative = gradcam_from_parts(act, std::vector<double>(4, -1.0), 1, 2, 2);
  for (double v : zero.map.values.values) EXPECT_EQ(v, 0.0);
  for (double v : negative.map.values.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(negative.parts.norm_max, 0.0);
}

TEST(GradCam, RangeAndPeakOnRealNetwork) {
  const auto arch = default_arch(3, 16);
  const auto net = init_network<float>(arch, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = oracle::random_tensor<float>({3, 16, 16}, seed);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto cam = gradcam(net, x, c, arch.target_layer);
      const auto& v = cam.map.values.values;
      EXPECT_EQ(cam.map.values.rows, 4u);
      double top = 0;
      for (double s : v) {
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        top = std::max(top, s);
      }
      if (cam.parts.norm_max > kSaliencyEpsilon) EXPECT_EQ(top, 1.0);
      EXPECT_EQ(cam.map.values, gradcam(net, x, c, arch.target_layer).map.values);
    }
  }
  EXPECT_THROW(gradcam(net, oracle::random_tensor<float>({3, 16, 16}, 1), 3, arch.target_layer), Error);
  EXPECT_THROW(gradcam(net, oracle::random_tensor<float>({3, 16, 16}, 1), 0, "nope"), Error);
}

TEST(GradCam, BatchMatchesSingleImage) {
  const auto arch = default_arch(2, 16);
  const auto net = init_network<double>(arch, 9);
  const auto a = oracle::random_tensor<double>({3, 16, 16}, 1), b = oracle::random_tensor<double>({3, 16, 16}, 2);
  const auto trace = forward(net, stack_batch<double>({&a, &b}), Mode::eval);
  const std::vector<std::size_t> classes = {1, 0};
  const auto cams = gradcam_batch(net, trace, classes, arch.target_layer);
  const auto sa = gradcam(net, a, 1, arch.target_layer), sb = gradcam(net, b, 0, arch.target_layer);
  for (std::size_t i = 0; i < sa.map.values.size(); ++i) {
    EXPECT_NEAR(cams[0].map.values.values[i], sa.map.values.values[i], 1e-12);
    EXPECT_NEAR(cams[1].map.values.values[i], sb.map.values.values[i], 1e-12);
  }
}

TEST(GradCam, FrozenBackwardMatchesFiniteDifferences) {
  const std::size_t channels = 3, rows = 4, cols = 5, plane = rows * cols;
  const auto act = oracle::random_tensor<double>({1, channels, rows, cols}, 4, 0, 1);
  const auto grad = oracle::random_tensor<double>({channels * plane}, 5, -0.5, 1);
  const auto cam = gradcam_from_parts(act.values(), grad.values(), channels, rows, cols);
  const auto w = oracle::random_tensor<double>({plane}, 6);
  const auto analytic = saliency_backward(cam.parts, w.values());
  std::vector<double> numeric;
  auto probe = act;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    auto eval = [&] {
      const auto s = oracle::frozen_saliency(probe, 0, cam.parts);
      double acc = 0;
      for (std::size_t p = 0; p < plane; ++p) acc += w[p] * s[p];
      return acc;
    };
    probe[i] = keep + 1e-6;
    const double up = eval();
    probe[i] = keep - 1e-6;
    const double down = eval();
    probe[i] = keep;
    numeric.push_back((up - down) / 2e-6);
  }
  EXPECT_LT(oracle::rel_error(analytic, numeric), 1e-7);
}

TEST(Upsample, BasicProperties) {
  Grid<double> c(3, 4, 0.4);
  for (double v : upsample_bilinear(c, 7, 9).values) EXPECT_NEAR(v, 0.4, 1e-15);
  Grid<double> one(1, 1, 0.8);
  for (double v : upsample_bilinear(one, 5, 3).values) EXPECT_EQ(v, 0.8);
  Grid<double> g(2, 2);
  g.values = {0, 1, 2, 3};
  EXPECT_EQ(upsample_bilinear(g, 2, 2), g);
  const auto up = upsample_bilinear(g, 3, 3);
  EXPECT_DOUBLE_EQ(up.at(0, 0), 0);
  EXPECT_DOUBLE_EQ(up.at(2, 2), 3);
  EXPECT_DOUBLE_EQ(up.at(1, 1), 1.5);
  for (double v : up.values) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 3);
  }
  EXPECT_THROW(upsample_bilinear(g, 0, 3), Error);
}

TEST(Heatmap, Blend) {
  Image img(6, 5, 1, 200);
  const auto zero = render_heatmap(Grid<double>(2, 2, 0.0), img);
  EXPECT_EQ(zero.height, 6u);
  EXPECT_EQ(zero.width, 5u);
  EXPECT_EQ(zero.channels, 3u);
  for (auto v : zero.data) EXPECT_EQ(v, 100);
  const auto full = render_heatmap(Grid<double>(2, 2, 1.0), img);
  for (std::size_t p = 0; p < full.pixel_count(); ++p) {
    EXPECT_EQ(full.data[p * 3], 228);
    EXPECT_EQ(full.data[p * 3 + 1], 228);
    EXPECT_EQ(full.data[p * 3 + 2], 100);
  }
  EXPECT_EQ(heat_color(0), (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(heat_color(1), (std::array<double, 3>{255, 255, 0}));
}
