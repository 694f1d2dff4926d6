#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gfsr/image.hpp"
#include "gfsr/superpixel.hpp"
#include "gfsr/tensor.hpp"

namespace gfsr {

// One vector per segment id.
struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<std::vector<double>> vectors;
};

// Segment embeddings from a C x h x w feature map: the label map is sampled
// at each cell's centre pixel and every segment takes the per-channel max over
// its cells. Segments owning no cell use the cell holding their centroid.
EmbeddingSet extract_segment_embeddings(std::span<const double> feature, std::size_t channels,
                                        std::size_t rows, std::size_t cols, const SegmentMap& seg);

// Network-free embedder: mean Lab (scaled by 1/100), 8-bin L histogram and
// boundary-pixel ratio; 12 dimensions.
EmbeddingSet fallback_embeddings(const Image& img, const SegmentMap& seg);
inline constexpr std::size_t kFallbackEmbeddingDim = 12;

struct ConceptModel {
  std::vector<std::vector<double>> centroids;
  std::vector<double> scores;  // one per concept, in [0,1]; empty until scored

  std::size_t k() const { return centroids.size(); }
  std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

struct KMeansFit {
  ConceptModel model;
  std::vector<std::size_t> labels;     // per input vector
  std::vector<double> inertia;         // after each assignment step
  std::size_t requested_k = 0;         // k as asked; model.k() may be smaller
};

// Greedy k-means++ seeding, then Lloyd iterations until the relative inertia change
// drops below 1e-6 or 100 iterations. k shrinks to the number of distinct
// vectors when there are fewer.
KMeansFit fit_concepts(const std::vector<std::vector<double>>& data, std::size_t k,
                       std::uint64_t seed);

// Nearest centroid (Euclidean); ties go to the lowest index.
std::size_t assign_concept(std::span<const double> v, const ConceptModel& model);

// score_c = share_c / max share, where share_c is the fraction of annotated
// segments assigned to concept c.
std::vector<double> score_concepts(std::span<const std::size_t> annotated, std::size_t k);

Grid<double> build_relevance_mask(const SegmentMap& seg, std::span<const std::size_t> seg_concepts,
                                  const ConceptModel& model);

// Box average onto rows x cols: every input pixel contributes to the cell its
// centre falls in.
Grid<double> pool_mask(const Grid<double>& mask, std::size_t rows, std::size_t cols);

void save_concept_model(const ConceptModel& model, const std::filesystem::path& path);
ConceptModel load_concept_model(const std::filesystem::path& path);

void save_mask(const Grid<double>& mask, const std::filesystem::path& path);
Grid<double> load_mask(const std::filesystem::path& path);

}  // namespace gfsr
