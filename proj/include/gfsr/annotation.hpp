#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string_view>

#include "gfsr/image.hpp"
#include "gfsr/superpixel.hpp"

namespace gfsr {

inline constexpr double kDefaultOverlap = 0.25;

// Segment s is relevant iff at least `overlap` of its pixels are nonzero in
// the mask. Monotone: raising `overlap` never adds segments.
std::set<std::size_t> segments_from_mask(const Image& mask, const SegmentMap& seg, double overlap);

// Newline-delimited segment ids.
std::set<std::size_t> segments_from_list(std::string_view text, const SegmentMap& seg);

// Either a P5 mask (same size as the segment map) or an id list.
std::set<std::size_t> load_annotation(const std::filesystem::path& path, const SegmentMap& seg,
                                      double overlap = kDefaultOverlap);

}  // namespace gfsr
