#include "gfsr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/rng.hpp"

namespace gfsr {

BackgroundMode parse_background_mode(std::string_view name) {
  if (name == "noise") return BackgroundMode::noise;
  if (name == "texture") return BackgroundMode::texture;
  fail_usage("unknown background mode '" + std::string(name) + "'");
}

void GenSpec::validate() const {
  if (marker_corr_train < 0 || marker_corr_train > 1 || marker_corr_test < 0 ||
      marker_corr_test > 1) {
    fail_data("gen: marker correlations must lie in [0,1]");
  }
  if (blob_radius_min <= 0 || blob_radius_max < blob_radius_min) {
    fail_data("gen: invalid blob radius range");
  }
  // The blob must fit inside the central half: diameter <= size/2.
  if (2.0 * blob_radius_max + 1.0 > static_cast<double>(image_size) / 2.0) {
    fail_data("gen: blob radius " + std::to_string(blob_radius_max) +
              " does not fit inside the central half of a " +
              std::to_string(image_size) + "-pixel image");
  }
  if (glyph_size < 3 || glyph_offset + glyph_size > image_size / 4) {
    fail_data("gen: glyph must lie inside the outer quarter of the image");
  }
}

GlyphBox glyph_box(const GenSpec& spec) {
  return {spec.glyph_offset, spec.glyph_offset, spec.glyph_size, spec.glyph_size};
}

namespace {

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void paint_background(const GenSpec& spec, Rng& rng, Grid<double>& field) {
  const double n = static_cast<double>(spec.image_size);
  if (spec.background == BackgroundMode::texture) {
    // Two random low-frequency gratings plus mild noise.
    double f1 = rng.uniform(1.0, 4.0), f2 = rng.uniform(1.0, 4.0);
    double t1 = rng.uniform(0, std::numbers::pi), t2 = rng.uniform(0, std::numbers::pi);
    double p1 = rng.uniform(0, 2 * std::numbers::pi), p2 = rng.uniform(0, 2 * std::numbers::pi);
    for (std::size_t r = 0; r < field.rows; ++r) {
      for (std::size_t c = 0; c < field.cols; ++c) {
        const double x = c / n, y = r / n;
        const double g1 = std::sin(2 * std::numbers::pi * f1 * (x * std::cos(t1) + y * std::sin(t1)) + p1);
        const double g2 = std::sin(2 * std::numbers::pi * f2 * (x * std::cos(t2) + y * std::sin(t2)) + p2);
        field.at(r, c) = spec.background_level + spec.noise_sigma * (g1 + g2) +
                         0.5 * spec.noise_sigma * rng.normal();
      }
    }
  } else {
    for (auto& v : field.values) v = spec.background_level + spec.noise_sigma * rng.normal();
  }
}

SyntheticSample make_sample(const GenSpec& spec, Rng& rng, int label, bool glyph) {
  const std::size_t n = spec.image_size;
  Grid<double> field(n, n);
  paint_background(spec, rng, field);

  SyntheticSample s;
  s.label = label;
  s.glyph = glyph;
  s.foreground = Image(n, n, 1, 0);

  // Blob geometry is drawn for every image so the RNG stream does not depend
  // on the label.
  const double ry = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
  const double rx = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
  const double lo = n / 4.0 + std::max(ry, rx);
  const double hi = 3.0 * n / 4.0 - 1.0 - std::max(ry, rx);
  const double cy = rng.uniform(lo, hi);
  const double cx = rng.uniform(lo, hi);
  if (label == 1) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double dy = (r - cy) / ry, dx = (c - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) {
          field.at(r, c) += spec.blob_contrast;
          s.foreground.at(r, c) = 255;
        }
      }
    }
  }

  s.image = Image(n, n, 1);
  for (std::size_t i = 0; i < field.size(); ++i) s.image.data[i] = clamp_u8(field.values[i]);

  if (glyph) {
    // L-shape: left bar and bottom bar, each a third of the glyph thick.
    const GlyphBox box = glyph_box(spec);
    const std::size_t thick = std::max<std::size_t>(1, spec.glyph_size / 3);
    for (std::size_t r = 0; r < box.height; ++r) {
      for (std::size_t c = 0; c < box.width; ++c) {
        if (c < thick || r >= box.height - thick) {
          s.image.at(box.row + r, box.col + c) = spec.glyph_value;
        }
      }
    }
  }
  return s;
}

// Glyph agrees with the label with probability rho + (1 - rho)/2, which gives
// a phi correlation of rho between glyph presence and a balanced label.
bool draw_glyph(Rng& rng, int label, double rho) {
  if (rng.uniform() < rho) return label == 1;
  return rng.uniform() < 0.5;
}

}  // namespace

SyntheticData generate_bias_dataset(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticData out;
  out.spec = spec;
  Rng rng(seed);
  auto emit = [&](const std::string& split, std::size_t count, double rho) {
    for (std::size_t i = 0; i < count; ++i) {
      const int label = static_cast<int>(i % 2);
      const bool glyph = draw_glyph(rng, label, rho);
      auto s = make_sample(spec, rng, label, glyph);
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu", split.c_str(), i);
      s.name = name;
      s.split = split;
      out.samples.push_back(std::move(s));
    }
  };
  emit("train", spec.n_train, spec.marker_corr_train);
  emit("test", spec.n_test, spec.marker_corr_test);
  return out;
}

Dataset write_bias_dataset(const SyntheticData& data, const std::filesystem::path& dir) {
  Dataset ds;
  ds.root = dir;
  ds.class_count = 2;
  std::string markers = "path,glyph,mask\n";
  for (const auto& s : data.samples) {
    const auto img_rel = std::filesystem::path("images") / (s.name + ".pgm");
    const auto mask_rel = std::filesystem::path("masks") / (s.name + ".pgm");
    save_image(s.image, dir / img_rel);
    save_image(s.foreground, dir / mask_rel);
    ds.entries.push_back({img_rel, s.label, s.split});
    markers += img_rel.generic_string() + "," + (s.glyph ? "1" : "0") + "," +
               mask_rel.generic_string() + "\n";
  }
  write_file_atomic(dir / "manifest.csv", format_manifest(ds));
  write_file_atomic(dir / "markers.csv", markers);
  return ds;
}

std::vector<MarkerInfo> load_markers(const std::filesystem::path& dir) {
  std::istringstream in(read_file(dir / "markers.csv"));
  std::string line;
  std::vector<MarkerInfo> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      fail_data("markers.csv: malformed row '" + line + "'");
    }
    out.push_back({dir / line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1) == "1",
                   dir / line.substr(c2 + 1)});
  }
  return out;
}

}  // namespace gfsr
