#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "gfsr/concepts.hpp"
#include "gfsr/image.hpp"
#include "gfsr/network.hpp"
#include "gfsr/superpixel.hpp"

namespace gfsr {

// Grayscale images are replicated to RGB before the Lab conversion.
SegmentMap segment_image(const Image& img, const SlicParams& params);
std::vector<SegmentMap> segment_images(std::span<const Image> images, const SlicParams& params);

// Eval-mode features at `layer`, max-pooled per segment.
std::vector<EmbeddingSet> network_embeddings(const Network& net, std::span<const Tensor<float>> inputs,
                                             std::span<const SegmentMap> segs, std::string_view layer);
std::vector<EmbeddingSet> fallback_embeddings(std::span<const Image> images, std::span<const SegmentMap> segs);

enum class ConceptSource { training, annotated };
ConceptSource parse_concept_source(std::string_view text);

struct Annotation {
  std::size_t image = 0;             // index into the embedding list
  std::set<std::size_t> segments;    // relevant segment ids
};

struct ConceptDiscovery {
  KMeansFit fit;
  std::vector<std::size_t> annotated_concepts;  // concept of every annotated segment
};

// Clusters segment embeddings (all of them, or only the annotated ones) into
// k concepts and scores each by its share of annotated segments.
ConceptDiscovery discover_concepts(std::span<const EmbeddingSet> embeddings,
                                   std::span<const Annotation> annotations, std::size_t k,
                                   std::uint64_t seed, ConceptSource source);

Grid<double> relevance_mask(const EmbeddingSet& emb, const SegmentMap& seg, const ConceptModel& model);
std::vector<Grid<double>> relevance_masks(std::span<const EmbeddingSet> embeddings,
                                          std::span<const SegmentMap> segs, const ConceptModel& model);

}  // namespace gfsr
