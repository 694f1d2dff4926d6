#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gfsr/image.hpp"
#include "gfsr/network.hpp"
#include "gfsr/pipeline.hpp"
#include "gfsr/superpixel.hpp"
#include "gfsr/synth.hpp"
#include "gfsr/trainer.hpp"

namespace gfsr {

// Shortcut-learning experiment on generated data: a baseline and a
// saliency-guided model share seeds and architecture; both are probed with
// marker occlusion and saliency placement.
struct BiasExperimentConfig {
  GenSpec gen;
  SlicParams slic;
  std::size_t annotated_per_class = 5;
  double overlap = 0.25;
  std::size_t concepts = 7;
  ConceptSource concept_source = ConceptSource::training;
  std::size_t pretrain_epochs = 20;
  TrainConfig guided;    // guided = true
  TrainConfig baseline;  // guided = false
  PreprocessMode preprocess = PreprocessMode::unit;
  std::uint64_t seed = 0;
  bool train_baseline = true;  // false: guided model only

  BiasExperimentConfig();
};

struct ModelProbe {
  double consistent_accuracy = 0;  // test images whose glyph agrees with the label
  double test_accuracy = 0;
  double occlusion_agreement = 0;
  double alignment = 0;            // mean saliency alignment vs propagated masks, test set
  double truth_alignment = 0;      // same against generator foreground masks
  double marker_mass = 0;          // mean saliency share inside the glyph box, glyph images
  double train_seconds = 0;
};

struct BiasExperimentResult {
  ModelProbe baseline;
  ModelProbe guided;
  Network baseline_net;
  Network guided_net;
  std::vector<EpochStats> guided_history;
  std::vector<EpochStats> baseline_history;
  std::vector<Grid<double>> train_masks;
  ConceptModel concepts;
  double seconds = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

BiasExperimentResult run_bias_experiment(const BiasExperimentConfig& cfg, const ProgressFn& progress = {});

// Plain-text summary: both probes, final training losses.
std::string format_bias_report(const BiasExperimentResult& r);

// Probe one trained model on the test split.
ModelProbe probe_model(const Network& net, const SyntheticData& data, const std::vector<std::size_t>& test,
                       const std::vector<Grid<double>>& test_masks, PreprocessMode mode);

}  // namespace gfsr
