#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace gfsr {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `path`, so readers never
// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gfsr
