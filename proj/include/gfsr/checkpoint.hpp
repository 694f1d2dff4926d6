#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "gfsr/network.hpp"

namespace gfsr {

inline constexpr int kCheckpointVersion = 1;

// Layout: "GFSRCKPT <version>\n", "arch <n>\n" + n bytes of ArchSpec text,
// "tensors <m>\n", then m records of "<name>\n" + tensor container record.
// Tensor names are "<layer>.weight" / "<layer>.bias".
std::string encode_checkpoint(const Network& net);
Network decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
// With `expected`, a checkpoint of a different architecture is rejected.
Network load_checkpoint(const std::filesystem::path& path,
                        const std::optional<ArchSpec>& expected = std::nullopt);

}  // namespace gfsr
