#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gfsr {

struct DatasetEntry {
  std::filesystem::path path;  // as written in the manifest
  int label = 0;
  std::string split;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::size_t class_count = 0;
  std::filesystem::path root;  // relative entry paths resolve against this

  std::filesystem::path resolve(const DatasetEntry& e) const {
    return e.path.is_absolute() ? e.path : root / e.path;
  }

  // Entry indices carrying the given split tag, in manifest order.
  std::vector<std::size_t> split_indices(std::string_view split) const;
  Dataset subset(std::string_view split) const;
};

Dataset parse_manifest(std::string_view text, const std::filesystem::path& root);
Dataset load_manifest(const std::filesystem::path& path);
std::string format_manifest(const Dataset& data);

}  // namespace gfsr
