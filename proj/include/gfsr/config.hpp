#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/evaluate.hpp"
#include "gfsr/image.hpp"
#include "gfsr/losses.hpp"
#include "gfsr/pipeline.hpp"
#include "gfsr/superpixel.hpp"
#include "gfsr/synth.hpp"
#include "gfsr/trainer.hpp"

namespace gfsr {

// Fixed offsets from the global seed.
enum SeedOffset : std::uint64_t {
  kSeedGen = 0,
  kSeedInit = 2,
  kSeedPretrain = 3,
  kSeedConcepts = 4,
  kSeedTrain = 5,
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path workdir = "work";
  std::filesystem::path manifest;     // default <workdir>/data/manifest.csv
  std::filesystem::path annotations;  // default <workdir>/annotate/annotations.csv
  PreprocessMode preprocess = PreprocessMode::unit;
  std::string arch = "default";

  GenSpec gen;
  SlicParams slic;

  std::size_t annotate_per_class = 5;
  std::size_t concepts_k = 7;
  double overlap = 0.25;
  ConceptSource concept_source = ConceptSource::training;
  bool fallback_embedder = false;
  std::size_t pretrain_epochs = 20;

  TrainConfig train;
  std::optional<std::size_t> epochs;  // unset: 800 guided, 300 baseline

  std::size_t gradcam_count = 8;
  SaliencyClass gradcam_class = SaliencyClass::true_label;

  std::vector<PerturbSpec> perturbations;

  std::filesystem::path manifest_path() const;
  std::filesystem::path annotations_path() const;
  TrainConfig train_config() const;  // epochs resolved, seed derived
};

// `key = value` lines; '#' starts a comment. Unknown keys and malformed
// values are usage errors naming the line.
RunConfig parse_config_text(std::string_view text, std::string_view origin = "config");
RunConfig parse_config(const std::filesystem::path& path);

// Every recognised key with its default, as a commented config file.
std::string config_reference();

}  // namespace gfsr
