#include "gfsr/experiment.hpp"

#include <chrono>
#include <cstdio>

#include "gfsr/annotation.hpp"
#include "gfsr/concepts.hpp"
#include "gfsr/error.hpp"
#include "gfsr/evaluate.hpp"
#include "gfsr/rng.hpp"
#include "gfsr/saliency.hpp"

namespace gfsr {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Grid<double> binary_grid(const Image& mask) {
  Grid<double> g(mask.height, mask.width);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = mask.data[i * mask.channels] ? 1.0 : 0.0;
  return g;
}

}  // namespace

BiasExperimentConfig::BiasExperimentConfig() {
  guided.epochs = kGuidedEpochs;
  guided.guided = true;
  baseline.epochs = kBaselineEpochs;
  baseline.guided = false;
}

ModelProbe probe_model(const Network& net, const SyntheticData& data, const std::vector<std::size_t>& test,
                       const std::vector<Grid<double>>& test_masks, PreprocessMode mode) {
  const auto& target = net.arch.target_layer;
  const auto shape = net.arch.output_shapes().at(net.arch.layer_index(target));
  const std::size_t h = shape[1], w = shape[2];
  const auto box = glyph_box(data.spec);

  PerturbSpec occlude;
  occlude.kind = PerturbKind::occlude_rect;
  occlude.rect = {box.row, box.col, box.height, box.width};
  occlude.fill = 0;

  Grid<double> glyph_full(data.spec.image_size, data.spec.image_size);
  for (std::size_t r = box.row; r < box.row + box.height; ++r) {
    for (std::size_t c = box.col; c < box.col + box.width; ++c) glyph_full.at(r, c) = 1.0;
  }
  const auto glyph_cells = pool_mask(glyph_full, h, w);

  std::vector<Tensor<float>> orig, occluded;
  for (auto i : test) {
    orig.push_back(preprocess(data.samples[i].image, mode));
    occluded.push_back(preprocess(perturb(data.samples[i].image, occlude), mode));
  }
  const auto logits = predict_logits(net, orig);
  const auto logits_occ = predict_logits(net, occluded);

  ModelProbe p;
  std::size_t consistent = 0, consistent_ok = 0, correct = 0, agree = 0, glyph_images = 0;
  double align = 0, truth_align = 0, marker = 0;
  for (std::size_t j = 0; j < test.size(); ++j) {
    const auto& s = data.samples[test[j]];
    const auto label = static_cast<std::size_t>(s.label);
    const auto pred = argmax(logits[j]);
    correct += pred == label;
    if (s.glyph == (s.label == 1)) {
      ++consistent;
      consistent_ok += pred == label;
    }
    agree += pred == argmax(logits_occ[j]);

    const auto cam = gradcam(net, orig[j], label, target);
    const auto& sal = cam.map.values;
    align += saliency_alignment(sal, pool_mask(test_masks[j], h, w));
    truth_align += saliency_alignment(sal, pool_mask(binary_grid(s.foreground), h, w));
    if (s.glyph) {
      ++glyph_images;
      marker += saliency_alignment(sal, glyph_cells);
    }
  }
  const double n = static_cast<double>(test.size());
  p.test_accuracy = static_cast<double>(correct) / n;
  p.consistent_accuracy = consistent ? static_cast<double>(consistent_ok) / static_cast<double>(consistent) : 0.0;
  p.occlusion_agreement = static_cast<double>(agree) / n;
  p.alignment = align / n;
  p.truth_alignment = truth_align / n;
  p.marker_mass = glyph_images ? marker / static_cast<double>(glyph_images) : 0.0;
  return p;
}

BiasExperimentResult run_bias_experiment(const BiasExperimentConfig& cfg, const ProgressFn& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const auto data = generate_bias_dataset(cfg.gen, derive_seed(cfg.seed, 0));
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    (data.samples[i].split == "train" ? train_idx : test_idx).push_back(i);
  }
  std::vector<Image> images;
  std::vector<Tensor<float>> inputs;
  for (const auto& s : data.samples) {
    images.push_back(s.image);
    inputs.push_back(preprocess(s.image, cfg.preprocess));
  }
  const auto segs = segment_images(images, cfg.slic);
  say("segmented " + std::to_string(segs.size()) + " images");

  const auto arch = default_arch(2, cfg.gen.image_size, 3);
  const auto init = init_network<float>(arch, derive_seed(cfg.seed, 2));

  TrainingSet pre;
  for (auto i : train_idx) {
    pre.inputs.push_back(inputs[i]);
    pre.labels.push_back(static_cast<std::size_t>(data.samples[i].label));
  }
  TrainConfig pre_cfg = cfg.baseline;
  pre_cfg.guided = false;
  pre_cfg.epochs = cfg.pretrain_epochs;
  pre_cfg.seed = derive_seed(cfg.seed, 3);
  const auto embedder = train(init, pre, pre_cfg).net;
  const auto embeddings = network_embeddings(embedder, inputs, segs, arch.embed_layer);

  // Annotations: generator foreground masks of the first few training images
  // of each class.
  std::vector<Annotation> annotations;
  std::vector<EmbeddingSet> train_emb;
  std::vector<SegmentMap> train_segs;
  std::size_t per_class[2] = {0, 0};
  for (std::size_t j = 0; j < train_idx.size(); ++j) {
    const auto i = train_idx[j];
    train_emb.push_back(embeddings[i]);
    train_segs.push_back(segs[i]);
    auto& count = per_class[data.samples[i].label];
    if (count < cfg.annotated_per_class) {
      ++count;
      annotations.push_back({j, segments_from_mask(data.samples[i].foreground, segs[i], cfg.overlap)});
    }
  }
  const auto found = discover_concepts(train_emb, annotations, cfg.concepts, derive_seed(cfg.seed, 4),
                                       cfg.concept_source);
  BiasExperimentResult out;
  out.concepts = found.fit.model;
  out.train_masks = relevance_masks(train_emb, train_segs, out.concepts);
  std::vector<Grid<double>> test_masks;
  for (auto i : test_idx) test_masks.push_back(relevance_mask(embeddings[i], segs[i], out.concepts));
  say("concepts fitted, masks built");

  TrainingSet guided_set = pre;
  guided_set.masks = out.train_masks;

  auto run = [&](const TrainConfig& base, const TrainingSet& set, const char* name, ModelProbe& probe,
                 Network& net, std::vector<EpochStats>& history) {
    TrainConfig c = base;
    c.seed = derive_seed(cfg.seed, 5);
    const auto t = std::chrono::steady_clock::now();
    auto r = train(init, set, c, [&](const EpochStats& e) {
      if (e.epoch % 50 == 0 || e.epoch == c.epochs) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%s epoch %zu l_cls %.4f l_rel %.4f acc %.3f align %.3f", name, e.epoch,
                      e.loss.l_cls, e.loss.l_relevance, e.train_acc, e.alignment);
        say(buf);
      }
    });
    const double secs = seconds_since(t);
    net = std::move(r.net);
    history = std::move(r.history);
    probe = probe_model(net, data, test_idx, test_masks, cfg.preprocess);
    probe.train_seconds = secs;
  };
  if (cfg.train_baseline) run(cfg.baseline, pre, "baseline", out.baseline, out.baseline_net, out.baseline_history);
  run(cfg.guided, guided_set, "guided", out.guided, out.guided_net, out.guided_history);
  out.seconds = seconds_since(t0);
  return out;
}

std::string format_bias_report(const BiasExperimentResult& r) {
  std::string out = "model,consistent_accuracy,test_accuracy,occlusion_agreement,alignment,truth_alignment,marker_mass,"
                    "final_l_cls,final_l_rel\n";
  auto row = [&](const char* name, const ModelProbe& p, const std::vector<EpochStats>& h) {
    if (h.empty()) return;
    char buf[320];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.9g,%.9g\n", name, p.consistent_accuracy,
                  p.test_accuracy, p.occlusion_agreement, p.alignment, p.truth_alignment, p.marker_mass,
                  h.back().loss.l_cls, h.back().loss.l_relevance);
    out += buf;
  };
  row("baseline", r.baseline, r.baseline_history);
  row("guided", r.guided, r.guided_history);
  return out;
}

}  // namespace gfsr
