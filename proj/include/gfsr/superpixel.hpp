#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gfsr/image.hpp"
#include "gfsr/tensor.hpp"

namespace gfsr {

struct Lab {
  double l = 0, a = 0, b = 0;
};

// sRGB (D65) -> CIELAB. Gray images are replicated to three channels first.
Grid<Lab> rgb_to_lab(const Image& img);
Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

struct SlicParams {
  std::size_t k = 50;          // requested segment count
  double compactness = 10.0;   // trades colour fidelity for spatial regularity
  std::size_t max_iter = 10;

  void validate() const;
};

struct SegmentMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> labels;  // row-major, dense in [0, n_segments)
  std::size_t n_segments = 0;
  std::vector<std::size_t> sizes;
  std::vector<std::array<double, 2>> centroids;  // (row, col)

  std::int32_t at(std::size_t r, std::size_t c) const { return labels[r * cols + c]; }

  // Recomputes n_segments, sizes and centroids from `labels`.
  void recount();

  bool operator==(const SegmentMap&) const = default;
};

// Grid interval S = sqrt(H*W / K).
double slic_interval(std::size_t rows, std::size_t cols, std::size_t k);

SegmentMap slic(const Grid<Lab>& lab, const SlicParams& params);

// Splits labels into 4-connected components. Components of at least min_size
// pixels (or the largest, if none is) keep their identity; smaller ones are
// absorbed into the adjacent kept region sharing the longest border. The
// result is relabelled densely from 0 in scan order.
SegmentMap enforce_connectivity(std::size_t rows, std::size_t cols,
                                const std::vector<std::int32_t>& raw, std::size_t min_size);

// Pixels with a 4-neighbour of a different label.
std::vector<bool> boundary_pixels(const SegmentMap& seg);

struct Overlay {
  Image image;
  std::string centroid_table;  // CSV rows: segment,row,col,size
};

Overlay segment_overlay(const Image& img, const SegmentMap& seg);
std::string centroid_table(const SegmentMap& seg);

// Persistence: labels as an i32 tensor (rows x cols) plus a centroid CSV.
void save_segment_map(const SegmentMap& seg, const std::string& tensor_path,
                      const std::string& table_path);
SegmentMap load_segment_map(const std::string& tensor_path);

}  // namespace gfsr
