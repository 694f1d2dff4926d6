#include <gtest/gtest.h>

#include <random>

#include "gfsr/concepts.hpp"
#include "gfsr/error.hpp"
#include "gfsr/pipeline.hpp"
#include "oracles.hpp"

using namespace gfsr;

namespace {

SegmentMap halves(std::size_t rows, std::size_t cols) {
  SegmentMap seg;
  seg.rows = rows;
  seg.cols = cols;
  seg.labels.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) seg.labels[r * cols + c] = c < cols / 2 ? 0 : 1;
  }
  seg.recount();
  return seg;
}

}  // namespace

TEST(Embeddings, SingleSegmentTakesGlobalMax) {
  SegmentMap seg = halves(8, 8);
  std::fill(seg.labels.begin(), seg.labels.end(), 0);
  seg.recount();
  const auto f = oracle::random_tensor<double>({3, 4, 4}, 1);
  const auto e = extract_segment_embeddings(f.values(), 3, 4, 4, seg);
  ASSERT_EQ(e.vectors.size(), 1u);
  for (std::size_t c = 0; c < 3; ++c) {
    double top = -1e9;
    for (std::size_t p = 0; p < 16; ++p) top = std::max(top, f[c * 16 + p]);
    EXPECT_EQ(e.vectors[0][c], top);
  }
}

TEST(Embeddings, ConstantFeature) {
  const auto seg = halves(8, 8);
  const std::vector<double> f(2 * 16, 0.7);
  for (const auto& v : extract_segment_embeddings(f, 2, 4, 4, seg).vectors) {
    EXPECT_EQ(v, (std::vector<double>{0.7, 0.7}));
  }
}

TEST(Embeddings, LeftRightPeaks) {
  const auto seg = halves(8, 8);
  std::vector<double> f(2 * 16, 0.0);
  f[0 * 16 + 1 * 4 + 0] = 5.0;  // channel 0, left half
  f[1 * 16 + 2 * 4 + 3] = 7.0;  // channel 1, right half
  const auto e = extract_segment_embeddings(f, 2, 4, 4, seg);
  EXPECT_EQ(e.vectors[0], (std::vector<double>{5.0, 0.0}));
  EXPECT_EQ(e.vectors[1], (std::vector<double>{0.0, 7.0}));
}

TEST(Embeddings, TinySegmentUsesCentroidCell) {
  SegmentMap seg = halves(8, 8);
  seg.labels[0] = 2;  // one pixel, never a cell centre
  seg.recount();
  std::vector<double> f(16, 0.0);
  f[0] = 3.0;
  const auto e = extract_segment_embeddings(f, 1, 4, 4, seg);
  ASSERT_EQ(e.vectors.size(), 3u);
  EXPECT_EQ(e.vectors[2], (std::vector<double>{3.0}));
  EXPECT_THROW(extract_segment_embeddings(f, 1, 4, 4, SegmentMap{}), Error);
}

TEST(Embeddings, FallbackIsFiniteAndSized) {
  Image img(16, 16, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 7);
  const auto seg = halves(16, 16);
  const auto e = fallback_embeddings(img, seg);
  EXPECT_EQ(e.dim, kFallbackEmbeddingDim);
  for (const auto& v : e.vectors) {
    EXPECT_EQ(v.size(), kFallbackEmbeddingDim);
    for (double x : v) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(KMeans, SingleClusterIsMean) {
  const std::vector<std::vector<double>> pts = {{0, 0}, {2, 0}, {1, 3}};
  const auto fit = fit_concepts(pts, 1, 3);
  EXPECT_NEAR(fit.model.centroids[0][0], 1.0, 1e-12);
  EXPECT_NEAR(fit.model.centroids[0][1], 1.0, 1e-12);
}

TEST(KMeans, DistinctPointsAreCentroids) {
  const std::vector<std::vector<double>> pts = {{0, 0}, {5, 5}, {9, 1}, {-3, 4}};
  const auto fit = fit_concepts(pts, 4, 1);
  EXPECT_NEAR(fit.inertia.back(), 0.0, 1e-12);
  for (const auto& p : pts) {
    EXPECT_EQ(fit.model.centroids[assign_concept(p, fit.model)], p);
  }
}

TEST(KMeans, ReducesKOnDuplicates) {
  const std::vector<std::vector<double>> pts = {{1, 1}, {1, 1}, {2, 2}, {2, 2}};
  const auto fit = fit_concepts(pts, 7, 1);
  EXPECT_EQ(fit.model.k(), 2u);
  EXPECT_EQ(fit.requested_k, 7u);
  EXPECT_THROW(fit_concepts({}, 3, 1), Error);
}

TEST(KMeans, PlantedClustersAndMonotoneInertia) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = oracle::planted_clusters(7, 40, 8, 1.0, seed);
    const auto fit = fit_concepts(p.points, 7, seed);
    EXPECT_GE(oracle::adjusted_rand_index(fit.labels, p.truth), 0.99);
    for (std::size_t i = 1; i < fit.inertia.size(); ++i) EXPECT_LE(fit.inertia[i], fit.inertia[i - 1] * (1 + 1e-12));
    EXPECT_EQ(fit.labels, fit_concepts(p.points, 7, seed).labels);
  }
}

TEST(KMeans, ScaleInvariantAssignments) {
  const auto p = oracle::planted_clusters(7, 30, 6, 1.0, 9);
  auto scaled = p.points;
  for (auto& v : scaled) {
    for (auto& x : v) x *= 3.5;
  }
  const auto a = fit_concepts(p.points, 7, 4), b = fit_concepts(scaled, 7, 4);
  EXPECT_DOUBLE_EQ(oracle::adjusted_rand_index(a.labels, b.labels), 1.0);
}

TEST(Concepts, AssignmentTieGoesLow) {
  ConceptModel m;
  m.centroids = {{10, 10}, {9, 9}, {-1, 0}, {5, 5}, {0, 4}, {1, 0}};
  EXPECT_EQ(assign_concept(std::vector<double>{0, 0}, m), 2u);
  EXPECT_EQ(assign_concept(std::vector<double>{5, 5}, m), 3u);
  EXPECT_THROW(assign_concept(std::vector<double>{0}, m), Error);
}

TEST(Concepts, Scores) {
  const std::vector<std::size_t> counts = {0, 0, 0, 0, 1, 1, 1, 2, 2, 3};
  const auto s = score_concepts(counts, 7);
  const std::vector<double> expected = {1.0, 0.75, 0.5, 0.25, 0, 0, 0};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_DOUBLE_EQ(s[i], expected[i]);
  EXPECT_EQ(score_concepts(std::vector<std::size_t>{2, 2}, 3), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(score_concepts(std::vector<std::size_t>{0, 1, 2}, 3), (std::vector<double>{1, 1, 1}));
  EXPECT_THROW(score_concepts({}, 3), Error);
}

TEST(Concepts, MaskPropagation) {
  const auto seg = halves(4, 4);
  ConceptModel m;
  m.centroids = {{0.0}, {1.0}};
  m.scores = {0.0, 0.75};
  const auto mask = build_relevance_mask(seg, std::vector<std::size_t>{0, 1}, m);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(mask.at(r, c), c < 2 ? 0.0 : 0.75);
  }
  EXPECT_THROW(build_relevance_mask(seg, std::vector<std::size_t>{0}, m), Error);
}

TEST(PoolMask, BoxAverage) {
  Grid<double> c(6, 6, 0.3);
  for (double v : pool_mask(c, 4, 5).values) EXPECT_NEAR(v, 0.3, 1e-15);
  Grid<double> diag(2, 2);
  diag.values = {1, 0, 0, 1};
  EXPECT_EQ(pool_mask(diag, 1, 1).values, (std::vector<double>{0.5}));
  Grid<double> top(4, 4, 0.0);
  for (std::size_t i = 0; i < 8; ++i) top.values[i] = 1.0;
  EXPECT_EQ(pool_mask(top, 2, 2).values, (std::vector<double>{1, 1, 0, 0}));
  EXPECT_THROW(pool_mask(top, 0, 2), Error);
  // Mean preserved when cells align.
  const auto r = oracle::random_tensor<double>({8, 8}, 3, 0, 1);
  Grid<double> g(8, 8);
  g.values.assign(r.values().begin(), r.values().end());
  double a = 0, b = 0;
  for (double v : g.values) a += v;
  for (double v : pool_mask(g, 4, 2).values) b += v;
  EXPECT_NEAR(a / 64, b / 8, 1e-12);
}

TEST(Concepts, Persistence) {
  oracle::TempDir dir("concepts");
  ConceptModel m;
  m.centroids = {{1, 2, 3}, {4, 5, 6}};
  m.scores = {1.0, 0.25};
  save_concept_model(m, dir / "c.bin");
  const auto back = load_concept_model(dir / "c.bin");
  EXPECT_EQ(back.centroids, m.centroids);
  EXPECT_EQ(back.scores, m.scores);
  Grid<double> mask(3, 2, 0.5);
  save_mask(mask, dir / "m.mask");
  EXPECT_EQ(load_mask(dir / "m.mask"), mask);
}

TEST(Concepts, DiscoveryFromAnnotations) {
  // Two kinds of segment: "lesion" near (5,5), "background" near (0,0).
  std::vector<EmbeddingSet> emb(4);
  for (auto& e : emb) {
    e.dim = 2;
    e.vectors = {{0.0, 0.1}, {5.0, 5.1}, {0.1, 0.0}};
  }
  const std::vector<Annotation> ann = {{0, {1}}, {2, {1}}};
  const auto found = discover_concepts(emb, ann, 2, 1, ConceptSource::training);
  const auto& model = found.fit.model;
  const auto lesion = assign_concept(std::vector<double>{5, 5}, model);
  EXPECT_EQ(model.scores[lesion], 1.0);
  EXPECT_EQ(model.scores[1 - lesion], 0.0);
  SegmentMap seg = halves(2, 3);
  seg.labels = {0, 1, 2, 0, 1, 2};
  seg.recount();
  const auto mask = relevance_mask(emb[0], seg, model);
  EXPECT_EQ(mask.values, (std::vector<double>{0, 1, 0, 0, 1, 0}));
  const auto only = discover_concepts(emb, ann, 2, 1, ConceptSource::annotated);
  EXPECT_EQ(only.fit.model.k(), 1u);
  EXPECT_THROW(discover_concepts(emb, {}, 2, 1, ConceptSource::training), Error);
}
