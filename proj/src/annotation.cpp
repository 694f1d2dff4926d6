#include "gfsr/annotation.hpp"

#include <charconv>
#include <sstream>
#include <string>
#include <vector>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"

namespace gfsr {

std::set<std::size_t> segments_from_mask(const Image& mask, const SegmentMap& seg, double overlap) {
  if (mask.height != seg.rows || mask.width != seg.cols) {
    fail_data("annotation: mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
              " but segment map is " + std::to_string(seg.rows) + "x" + std::to_string(seg.cols));
  }
  std::vector<std::size_t> inside(seg.n_segments, 0);
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    bool on = false;
    for (std::size_t c = 0; c < mask.channels; ++c) on = on || mask.data[p * mask.channels + c] != 0;
    if (on) ++inside[static_cast<std::size_t>(seg.labels[p])];
  }
  std::set<std::size_t> out;
  for (std::size_t s = 0; s < seg.n_segments; ++s) {
    if (inside[s] > 0 &&
        static_cast<double>(inside[s]) >= overlap * static_cast<double>(seg.sizes[s])) {
      out.insert(s);
    }
  }
  return out;
}

std::set<std::size_t> segments_from_list(std::string_view text, const SegmentMap& seg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::set<std::size_t> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t id = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), id);
    if (ec != std::errc() || p != line.data() + line.size()) {
      fail_data("annotation line " + std::to_string(lineno) + ": not a segment id: '" + line + "'");
    }
    if (id >= seg.n_segments) {
      fail_data("annotation line " + std::to_string(lineno) + ": unknown segment id " + line);
    }
    out.insert(id);
  }
  return out;
}

std::set<std::size_t> load_annotation(const std::filesystem::path& path, const SegmentMap& seg,
                                      double overlap) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return segments_from_mask(decode_pnm(bytes), seg, overlap);
  }
  return segments_from_list(bytes, seg);
}

}  // namespace gfsr
