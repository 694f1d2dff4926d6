#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <random>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/pipeline.hpp"
#include "gfsr/superpixel.hpp"
#include "oracles.hpp"

using namespace gfsr;

TEST(Lab, ReferenceColours) {
  const auto white = srgb_to_lab(255, 255, 255);
  EXPECT_NEAR(white.l, 100.0, 1e-3);
  EXPECT_NEAR(white.a, 0.0, 1e-3);
  EXPECT_NEAR(white.b, 0.0, 1e-3);
  const auto black = srgb_to_lab(0, 0, 0);
  EXPECT_NEAR(black.l, 0.0, 1e-9);
  const auto red = srgb_to_lab(255, 0, 0);
  EXPECT_NEAR(red.l, 53.24, 0.05);
  EXPECT_NEAR(red.a, 80.09, 0.1);
  EXPECT_NEAR(red.b, 67.20, 0.1);
}

TEST(Slic, PartitionConnectivityAndCount) {
  SlicParams params;
  for (const auto& img : oracle::slic_fixtures(7)) {
    const auto seg = segment_image(img, params);
    ASSERT_EQ(seg.labels.size(), 64u * 64u);
    std::size_t total = 0;
    for (auto s : seg.sizes) {
      EXPECT_GT(s, 0u);
      total += s;
    }
    EXPECT_EQ(total, 64u * 64u);
    for (auto l : seg.labels) {
      EXPECT_GE(l, 0);
      EXPECT_LT(static_cast<std::size_t>(l), seg.n_segments);
    }
    EXPECT_TRUE(oracle::segments_connected(seg));
    EXPECT_GE(seg.n_segments, 25u);
    EXPECT_LE(seg.n_segments, 100u);
    EXPECT_EQ(seg, segment_image(img, params));
  }
}

TEST(Slic, DegenerateAndSpecExamples) {
  const auto one = segment_image(Image(1, 1, 1, 9), SlicParams{1, 10.0, 10});
  EXPECT_EQ(one.n_segments, 1u);
  EXPECT_THROW(segment_image(Image(4, 4, 1), SlicParams{17, 10.0, 10}), Error);

  const auto flat = segment_image(Image(100, 100, 3, 77), SlicParams{});
  EXPECT_GE(flat.n_segments, 25u);
  EXPECT_LE(flat.n_segments, 100u);
  EXPECT_TRUE(oracle::segments_connected(flat));

  Image halves(20, 20, 1, 0);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 10; c < 20; ++c) halves.at(r, c) = 255;
  }
  const auto seg = segment_image(halves, SlicParams{2, 0.2, 10});
  for (std::size_t half = 0; half < 2; ++half) {
    std::map<std::int32_t, int> votes;
    for (std::size_t r = 0; r < 20; ++r) {
      for (std::size_t c = half * 10; c < half * 10 + 10; ++c) ++votes[seg.at(r, c)];
    }
    int best = 0;
    for (const auto& [l, v] : votes) best = std::max(best, v);
    EXPECT_GE(best, 180);
  }
}

TEST(Slic, CompactnessShortensBoundaries) {
  std::mt19937 gen(11);
  std::normal_distribution<double> noise(0, 25);
  for (int trial = 0; trial < 3; ++trial) {
    Image img(64, 64, 3);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(std::clamp(128 + noise(gen), 0.0, 255.0));
    double previous = 1e18;
    for (double m : {1.0, 10.0, 40.0, 100.0}) {
      const auto seg = segment_image(img, SlicParams{50, m, 10});
      const auto edges = boundary_pixels(seg);
      const double length =
          static_cast<double>(std::count(edges.begin(), edges.end(), true)) / static_cast<double>(seg.n_segments);
      EXPECT_LE(length, previous * 1.05) << "m=" << m;
      previous = length;
    }
  }
}

TEST(Slic, ConstantImageGivesGridLikeSegments) {
  const auto seg = segment_image(Image(64, 64, 1, 128), SlicParams{});
  EXPECT_TRUE(oracle::segments_connected(seg));
  EXPECT_GE(seg.n_segments, 25u);
  EXPECT_LE(seg.n_segments, 100u);
  EXPECT_EQ(seg, segment_image(Image(64, 64, 1, 128), SlicParams{}));
}

TEST(Slic, BoundaryRecallOnTwoTone) {
  SlicParams params;
  params.compactness = 0.2;
  const auto img = oracle::two_tone(64);
  const auto seg = segment_image(img, params);
  EXPECT_GE(oracle::boundary_recall(img, seg, 2), 0.9);
}

TEST(Slic, IntervalAndValidation) {
  EXPECT_DOUBLE_EQ(slic_interval(64, 64, 64), 8.0);
  SlicParams bad;
  bad.k = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = SlicParams{};
  bad.compactness = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Connectivity, SmallFragmentsAreMerged) {
  // A 1-pixel island of label 1 inside label 0.
  std::vector<std::int32_t> raw(36, 0);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 3; c < 6; ++c) raw[r * 6 + c] = 2;
  }
  raw[1 * 6 + 1] = 1;
  const auto seg = enforce_connectivity(6, 6, raw, 4);
  EXPECT_EQ(seg.n_segments, 2u);
  EXPECT_EQ(seg.at(1, 1), seg.at(0, 0));
  EXPECT_TRUE(oracle::segments_connected(seg));
}

TEST(Connectivity, ConnectedLabellingUnchanged) {
  std::vector<std::int32_t> raw(64);
  for (std::size_t p = 0; p < 64; ++p) raw[p] = 5 + static_cast<std::int32_t>((p / 8) / 4 * 2 + (p % 8) / 4);
  const auto seg = enforce_connectivity(8, 8, raw, 16);
  EXPECT_EQ(seg.n_segments, 4u);
  for (std::size_t p = 0; p < 64; ++p) EXPECT_EQ(seg.labels[p], raw[p] - 5);
}

TEST(Connectivity, CheckerboardCollapses) {
  std::vector<std::int32_t> raw(100);
  for (std::size_t p = 0; p < 100; ++p) raw[p] = static_cast<std::int32_t>((p / 10 + p % 10) % 2);
  const auto seg = enforce_connectivity(10, 10, raw, 4);
  EXPECT_EQ(seg.n_segments, 1u);
}

TEST(Connectivity, SplitLabelBecomesTwoSegments) {
  // label 0 appears as two separate large bands around label 1
  std::vector<std::int32_t> raw(60, 0);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 4; c < 6; ++c) raw[r * 10 + c] = 1;
  }
  const auto seg = enforce_connectivity(6, 10, raw, 4);
  EXPECT_EQ(seg.n_segments, 3u);
  EXPECT_TRUE(oracle::segments_connected(seg));
}

TEST(SegmentMap, PersistenceAndOverlay) {
  oracle::TempDir dir("seg");
  const auto img = oracle::two_tone(32);
  const auto seg = segment_image(img, SlicParams{});
  save_segment_map(seg, (dir / "a.seg").string(), (dir / "a.csv").string());
  EXPECT_EQ(load_segment_map((dir / "a.seg").string()), seg);
  const auto table = read_file(dir / "a.csv");
  EXPECT_EQ(table.rfind("segment,row,col,size\n", 0), 0u);
  const auto overlay = segment_overlay(img, seg);
  EXPECT_EQ(overlay.image.height, 32u);
  EXPECT_EQ(overlay.image.channels, 3u);
  const auto edges = boundary_pixels(seg);
  for (std::size_t p = 0; p < edges.size(); ++p) {
    if (edges[p]) {
      EXPECT_EQ(overlay.image.data[3 * p], 255);
      EXPECT_EQ(overlay.image.data[3 * p + 1], 0);
    }
  }
}
