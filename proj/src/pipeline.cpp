#include "gfsr/pipeline.hpp"

#include <algorithm>

#include "gfsr/error.hpp"
#include "gfsr/parallel.hpp"

namespace gfsr {

SegmentMap segment_image(const Image& img, const SlicParams& params) {
  return slic(rgb_to_lab(img.channels == 3 ? img : to_rgb(img)), params);
}

std::vector<SegmentMap> segment_images(std::span<const Image> images, const SlicParams& params) {
  std::vector<SegmentMap> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = segment_image(images[i], params); });
  return out;
}

std::vector<EmbeddingSet> network_embeddings(const Network& net, std::span<const Tensor<float>> inputs,
                                             std::span<const SegmentMap> segs, std::string_view layer) {
  if (inputs.size() != segs.size()) fail_data("embeddings: image and segment map counts differ");
  std::vector<EmbeddingSet> out;
  out.reserve(inputs.size());
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < inputs.size(); start += kBatch) {
    const std::size_t stop = std::min(inputs.size(), start + kBatch);
    std::vector<const Tensor<float>*> ptrs;
    for (std::size_t i = start; i < stop; ++i) ptrs.push_back(&inputs[i]);
    const auto trace = forward(net, stack_batch(ptrs), Mode::eval);
    const auto& act = trace.activation(net.arch, layer);
    if (act.rank() != 4) fail_data("embeddings: layer '" + std::string(layer) + "' is not a spatial map");
    for (std::size_t i = start; i < stop; ++i) {
      const auto slice = act.slice0(i - start);
      const std::vector<double> feature(slice.begin(), slice.end());
      out.push_back(extract_segment_embeddings(feature, act.dim(1), act.dim(2), act.dim(3), segs[i]));
    }
  }
  return out;
}

std::vector<EmbeddingSet> fallback_embeddings(std::span<const Image> images, std::span<const SegmentMap> segs) {
  if (images.size() != segs.size()) fail_data("embeddings: image and segment map counts differ");
  std::vector<EmbeddingSet> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) { out[i] = fallback_embeddings(images[i], segs[i]); });
  return out;
}

ConceptSource parse_concept_source(std::string_view text) {
  if (text == "training") return ConceptSource::training;
  if (text == "annotated") return ConceptSource::annotated;
  fail_usage("concept source must be training or annotated, got '" + std::string(text) + "'");
}

ConceptDiscovery discover_concepts(std::span<const EmbeddingSet> embeddings,
                                   std::span<const Annotation> annotations, std::size_t k,
                                   std::uint64_t seed, ConceptSource source) {
  std::vector<std::vector<double>> annotated;
  for (const auto& a : annotations) {
    if (a.image >= embeddings.size()) fail_data("concepts: annotation refers to a missing image");
    const auto& emb = embeddings[a.image];
    for (auto s : a.segments) {
      if (s >= emb.vectors.size()) fail_data("concepts: annotated segment " + std::to_string(s) + " does not exist");
      annotated.push_back(emb.vectors[s]);
    }
  }
  if (annotated.empty()) fail_data("concepts: no annotated segments");

  ConceptDiscovery out;
  if (source == ConceptSource::annotated) {
    out.fit = fit_concepts(annotated, k, seed);
  } else {
    std::vector<std::vector<double>> all;
    for (const auto& e : embeddings) all.insert(all.end(), e.vectors.begin(), e.vectors.end());
    out.fit = fit_concepts(all, k, seed);
  }
  auto& model = out.fit.model;
  for (const auto& v : annotated) out.annotated_concepts.push_back(assign_concept(v, model));
  model.scores = score_concepts(out.annotated_concepts, model.k());
  return out;
}

Grid<double> relevance_mask(const EmbeddingSet& emb, const SegmentMap& seg, const ConceptModel& model) {
  if (emb.vectors.size() != seg.n_segments) fail_data("masks: embedding count differs from segment count");
  std::vector<std::size_t> concepts(seg.n_segments);
  for (std::size_t s = 0; s < seg.n_segments; ++s) concepts[s] = assign_concept(emb.vectors[s], model);
  return build_relevance_mask(seg, concepts, model);
}

std::vector<Grid<double>> relevance_masks(std::span<const EmbeddingSet> embeddings,
                                          std::span<const SegmentMap> segs, const ConceptModel& model) {
  if (embeddings.size() != segs.size()) fail_data("masks: embedding and segment map counts differ");
  std::vector<Grid<double>> out(segs.size());
  parallel_for(segs.size(), [&](std::size_t i) { out[i] = relevance_mask(embeddings[i], segs[i], model); });
  return out;
}

}  // namespace gfsr
