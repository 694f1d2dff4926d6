#include "gfsr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"

namespace gfsr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

std::vector<std::size_t> Dataset::split_indices(std::string_view split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(std::string_view split) const {
  Dataset out;
  out.class_count = class_count;
  out.root = root;
  for (const auto& e : entries) {
    if (e.split == split) out.entries.push_back(e);
  }
  return out;
}

Dataset parse_manifest(std::string_view text, const std::filesystem::path& root) {
  Dataset data;
  data.root = root;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = trim(line);
    if (row.empty()) continue;
    if (!header) {
      if (row != "path,label,split") {
        fail_data("manifest line " + std::to_string(lineno) +
                  ": expected header 'path,label,split'");
      }
      header = true;
      continue;
    }
    const auto c1 = row.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos) {
      fail_data("manifest line " + std::to_string(lineno) + ": expected 3 fields");
    }
    DatasetEntry e;
    const auto path = trim(row.substr(0, c1));
    const auto label = trim(row.substr(c1 + 1, c2 - c1 - 1));
    e.split = std::string(trim(row.substr(c2 + 1)));
    auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), e.label);
    if (ec != std::errc() || ptr != label.data() + label.size() || e.label < 0) {
      fail_data("manifest line " + std::to_string(lineno) + ": non-integer label '" +
                std::string(label) + "'");
    }
    if (path.empty()) fail_data("manifest line " + std::to_string(lineno) + ": empty path");
    if (!seen.insert(std::string(path)).second) {
      fail_data("manifest line " + std::to_string(lineno) + ": duplicate entry '" +
                std::string(path) + "'");
    }
    e.path = std::string(path);
    max_label = std::max(max_label, e.label);
    data.entries.push_back(std::move(e));
  }
  if (!header) fail_data("empty manifest");
  if (data.entries.empty()) fail_data("empty manifest");
  data.class_count = static_cast<std::size_t>(max_label + 1);
  return data;
}

Dataset load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string format_manifest(const Dataset& data) {
  std::string out = "path,label,split\n";
  for (const auto& e : data.entries) {
    out += e.path.generic_string() + "," + std::to_string(e.label) + "," + e.split + "\n";
  }
  return out;
}

}  // namespace gfsr
