#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gfsr/dataset.hpp"
#include "gfsr/image.hpp"

namespace gfsr {

enum class BackgroundMode { noise, texture };

BackgroundMode parse_background_mode(std::string_view name);

// Parameters of the synthetic shortcut dataset: class 1 carries a bright
// elliptical blob, and a corner glyph is correlated with the class label.
struct GenSpec {
  std::size_t image_size = 64;
  std::size_t n_train = 400;
  std::size_t n_test = 200;
  double marker_corr_train = 1.0;
  double marker_corr_test = 0.5;
  double blob_contrast = 40.0;
  double blob_radius_min = 5.0;
  double blob_radius_max = 9.0;
  double background_level = 100.0;
  double noise_sigma = 20.0;
  BackgroundMode background = BackgroundMode::noise;
  std::size_t glyph_offset = 2;  // glyph top-left at (offset, offset)
  std::size_t glyph_size = 6;
  std::uint8_t glyph_value = 255;

  void validate() const;
};

// Bounding box of the corner glyph: rows/cols [offset, offset + size).
struct GlyphBox {
  std::size_t row = 0, col = 0, height = 0, width = 0;
};
GlyphBox glyph_box(const GenSpec& spec);

struct SyntheticSample {
  std::string name;    // file stem, e.g. "train_0007"
  std::string split;   // "train" | "test"
  int label = 0;
  bool glyph = false;
  Image image;         // single channel
  Image foreground;    // single channel, 255 on blob pixels, 0 elsewhere
};

struct SyntheticData {
  GenSpec spec;
  std::vector<SyntheticSample> samples;
};

SyntheticData generate_bias_dataset(const GenSpec& spec, std::uint64_t seed);

// Writes images/<name>.pgm, masks/<name>.pgm, manifest.csv and markers.csv
// (columns path,glyph,mask) under `dir`; returns the manifest dataset.
Dataset write_bias_dataset(const SyntheticData& data, const std::filesystem::path& dir);

struct MarkerInfo {
  std::filesystem::path image;
  bool glyph = false;
  std::filesystem::path mask;
};

// Reads markers.csv written by write_bias_dataset; paths resolve against `dir`.
std::vector<MarkerInfo> load_markers(const std::filesystem::path& dir);

}  // namespace gfsr
