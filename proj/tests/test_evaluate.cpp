#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gfsr/error.hpp"
#include "gfsr/evaluate.hpp"
#include "oracles.hpp"

using namespace gfsr;

namespace {

Image noise_image(std::size_t rows, std::size_t cols, std::size_t channels, std::uint32_t seed) {
  std::mt19937 gen(seed);
  Image img(rows, cols, channels);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(gen());
  return img;
}

}  // namespace

TEST(Metrics, HandComputedBinary) {
  std::vector<std::size_t> truth, preds;
  auto add = [&](std::size_t t, std::size_t p, int n) {
    for (int i = 0; i < n; ++i) {
      truth.push_back(t);
      preds.push_back(p);
    }
  };
  add(0, 0, 50);
  add(0, 1, 10);
  add(1, 0, 5);
  add(1, 1, 35);
  const auto r = metrics(preds, truth, {}, 2);
  EXPECT_DOUBLE_EQ(r.sensitivity, 0.875);
  EXPECT_NEAR(r.specificity, 50.0 / 60.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.85);
  EXPECT_EQ(r.confusion, (Matrix{{50, 10}, {5, 35}}));
  EXPECT_TRUE(std::isnan(r.auc));
}

TEST(Metrics, PerfectAndConstant) {
  const std::vector<std::size_t> truth = {0, 1, 1, 0, 1};
  const auto perfect = metrics(truth, truth, {}, 2);
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.sensitivity, 1.0);
  EXPECT_EQ(perfect.specificity, 1.0);
  const std::vector<std::size_t> zeros(5, 0);
  const auto constant = metrics(zeros, truth, {}, 2);
  EXPECT_EQ(constant.sensitivity, 0.0);
  EXPECT_EQ(constant.specificity, 1.0);
  EXPECT_THROW(metrics(zeros, std::vector<std::size_t>{0}, {}, 2), Error);
  EXPECT_THROW(metrics(std::vector<std::size_t>{2}, std::vector<std::size_t>{0}, {}, 2), Error);
}

TEST(Metrics, MultiClassMacroAndPermutation) {
  std::mt19937 gen(3);
  std::vector<std::size_t> truth(60), preds(60);
  std::vector<std::vector<double>> scores(60, std::vector<double>(4));
  for (std::size_t i = 0; i < 60; ++i) {
    truth[i] = i % 4;
    preds[i] = gen() % 3 == 0 ? gen() % 4 : truth[i];
    for (auto& s : scores[i]) s = std::uniform_real_distribution<double>(0, 1)(gen);
    scores[i][truth[i]] += 0.3;
  }
  const auto r = metrics(preds, truth, scores, 4);
  std::size_t total = 0;
  for (const auto& row : r.confusion) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  EXPECT_EQ(total, 60u);
  for (double v : {r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.auc, r.specificity}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.sensitivity, r.macro_recall);
  std::vector<std::size_t> order(60);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::size_t> t2, p2;
  std::vector<std::vector<double>> s2;
  for (auto i : order) {
    t2.push_back(truth[i]);
    p2.push_back(preds[i]);
    s2.push_back(scores[i]);
  }
  const auto r2 = metrics(p2, t2, s2, 4);
  EXPECT_EQ(r2.confusion, r.confusion);
  EXPECT_DOUBLE_EQ(r2.macro_f1, r.macro_f1);
  EXPECT_NEAR(r2.auc, r.auc, 1e-12);
}

TEST(RocAuc, SimpleCases) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(RocAuc, MatchesPairwiseOracleAndMonotoneInvariance) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 199;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(gen() % 20) / 7.0;  // plenty of ties
      y[i] = static_cast<int>(gen() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    const double auc = roc_auc(s, y);
    EXPECT_NEAR(auc, oracle::pairwise_auc(s, y), 1e-9);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 4;
    EXPECT_NEAR(roc_auc(t, y), auc, 1e-12);
  }
}

TEST(Perturb, Occlusion) {
  const auto img = noise_image(10, 12, 3, 1);
  PerturbSpec spec = parse_perturb_spec("occlude:2,3,4,5,0");
  const auto out = perturb(img, spec);
  ASSERT_EQ(out.height, img.height);
  ASSERT_EQ(out.width, img.width);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 12; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const bool inside = r >= 2 && r < 6 && c >= 3 && c < 8;
        EXPECT_EQ(out.at(r, c, ch), inside ? 0 : img.at(r, c, ch));
      }
    }
  }
  EXPECT_THROW(perturb(img, parse_perturb_spec("occlude:8,8,4,4")), Error);
}

TEST(Perturb, CropResize) {
  const auto img = noise_image(9, 9, 1, 2);
  EXPECT_EQ(perturb(img, parse_perturb_spec("crop:0,0,9,9")), img);
  const auto out = perturb(img, parse_perturb_spec("crop:2,2,5,5"));
  EXPECT_EQ(out.height, 9u);
  EXPECT_EQ(out.width, 9u);
  EXPECT_EQ(out.at(0, 0), img.at(2, 2));
  EXPECT_EQ(out.at(8, 8), img.at(6, 6));
  EXPECT_EQ(out.at(4, 4), img.at(4, 4));  // centre maps to the crop centre
}

TEST(Perturb, RadialBlurProperties) {
  const Image flat(21, 21, 1, 77);
  EXPECT_EQ(perturb(flat, parse_perturb_spec("blur:3")), flat);
  const auto img = noise_image(21, 21, 1, 3);
  const auto out = perturb(img, parse_perturb_spec("blur:4,1.5,2,10,10"));
  for (std::size_t r = 0; r < 21; ++r) {
    for (std::size_t c = 0; c < 21; ++c) {
      if (std::hypot(r - 10.0, c - 10.0) <= 4.0) EXPECT_EQ(out.at(r, c), img.at(r, c));
    }
  }
  EXPECT_THROW(parse_perturb_spec("blur:0"), Error);
  EXPECT_THROW(parse_perturb_spec("blur:5,0"), Error);
  EXPECT_THROW(parse_perturb_spec("crop:0,0,0,4"), Error);
}

TEST(Perturb, GaussianImpulse) {
  Grid<double> impulse(21, 21, 0.0);
  impulse.at(10, 10) = 1.0;
  const auto out = gaussian_blur(impulse, 1.5);
  double k[9], total = 0;
  for (int i = -4; i <= 4; ++i) total += k[i + 4] = std::exp(-i * i / (2 * 1.5 * 1.5));
  for (auto& v : k) v /= total;
  for (int dr = -3; dr <= 3; ++dr) {
    for (int dc = -3; dc <= 3; ++dc) EXPECT_NEAR(out.at(10 + dr, 10 + dc), k[dr + 4] * k[dc + 4], 1e-3);
  }
  double sum = 0;
  for (double v : out.values) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Perturb, BackgroundReplace) {
  const auto img = noise_image(20, 20, 1, 4);
  PerturbSpec spec = parse_perturb_spec("replace:6,unused.pgm,2,10,10");
  spec.reference = Image(20, 20, 1, 200);
  const auto out = perturb(img, spec);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      const double d = std::hypot(r - 10.0, c - 10.0);
      if (d < 6 - 2) EXPECT_EQ(out.at(r, c), img.at(r, c));
      if (d >= 8) EXPECT_EQ(out.at(r, c), 200);
    }
  }
  PerturbSpec missing = parse_perturb_spec("replace:6,/nonexistent.pgm");
  EXPECT_THROW(perturb(img, missing), Error);
}

TEST(Perturb, SpecParsing) {
  EXPECT_EQ(parse_perturb_spec("occlude:1,2,3,4").fill, 0);
  EXPECT_EQ(parse_perturb_spec("occlude:1,2,3,4,9").fill, 9);
  const auto b = parse_perturb_spec("blur:60");
  EXPECT_EQ(b.sigma, 1.5);
  EXPECT_EQ(b.feather, 2.0);
  EXPECT_TRUE(b.auto_center);
  EXPECT_THROW(parse_perturb_spec("smudge:1"), Error);
  EXPECT_THROW(parse_perturb_spec("occlude:1,2"), Error);
  EXPECT_THROW(parse_perturb_spec("occlude"), Error);
}

TEST(Robustness, FromPredictions) {
  const std::vector<std::size_t> a = {0, 0, 1}, b = {0, 1, 1};
  const auto r = robustness_from_predictions(a, b, 2);
  EXPECT_DOUBLE_EQ(r.agreement, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.flip, 1.0 / 3.0);
  EXPECT_EQ(r.flips, (Matrix{{1, 1}, {0, 1}}));
  EXPECT_THROW(robustness_from_predictions({}, {}, 2), Error);
}

TEST(Robustness, IdentityCropKeepsPredictions) {
  const auto net = init_network<float>(default_arch(3, 16), 4);
  std::vector<Image> imgs;
  for (std::uint32_t i = 0; i < 6; ++i) imgs.push_back(noise_image(16, 16, 1, i));
  const auto r = robustness(net, imgs, parse_perturb_spec("crop:0,0,16,16"), PreprocessMode::unit);
  EXPECT_EQ(r.agreement, 1.0);
  EXPECT_EQ(r.flip, 0.0);
  const auto occ = robustness(net, imgs, parse_perturb_spec("occlude:0,0,16,16"), PreprocessMode::unit);
  EXPECT_DOUBLE_EQ(occ.agreement + occ.flip, 1.0);
  std::size_t total = 0;
  for (const auto& row : occ.flips) total += std::accumulate(row.begin(), row.end(), std::size_t{0});
  EXPECT_EQ(total, 6u);
}

TEST(Alignment, Cases) {
  Grid<double> ones(3, 3, 1.0);
  EXPECT_NEAR(saliency_alignment(ones, ones), 1.0, 1e-8);
  Grid<double> s(3, 3, 0.0), m(3, 3, 0.0);
  s.at(0, 0) = 1;
  m.at(2, 2) = 1;
  EXPECT_EQ(saliency_alignment(s, m), 0.0);
  m.at(0, 0) = 1;
  EXPECT_NEAR(saliency_alignment(s, m), 1.0, 1e-8);
  EXPECT_THROW(saliency_alignment(s, Grid<double>(2, 3)), Error);
}

TEST(Perturb, DescribeRoundTrips) {
  for (const char* text : {"occlude:1,2,3,4,9", "crop:0,0,8,8", "blur:5,1.5,2", "blur:5,2,3,10,12",
                           "replace:7,bg.pgm,2"}) {
    const auto spec = parse_perturb_spec(text);
    EXPECT_EQ(spec.describe(), text);
    EXPECT_EQ(parse_perturb_spec(spec.describe()).describe(), text);
  }
}
