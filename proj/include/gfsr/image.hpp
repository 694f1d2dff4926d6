#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/tensor.hpp"

namespace gfsr {

// 8-bit raster, row-major, channel-interleaved. channels is 1 or 3.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return data[(r * width + c) * channels + ch];
  }
  std::uint8_t at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return data[(r * width + c) * channels + ch];
  }

  std::size_t pixel_count() const noexcept { return height * width; }
  bool valid() const noexcept;

  bool operator==(const Image&) const = default;
};

// Netpbm: P5 (gray) or P6 (RGB), maxval 255.
Image decode_pnm(std::string_view bytes);
std::string encode_pnm(const Image& img);
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

// Rec.601 luma for RGB, identity for gray.
Grid<double> gray_levels(const Image& img);
Image to_rgb(const Image& img);

enum class PreprocessMode {
  bgr_mean,  // Keras ResNet50 convention: RGB -> BGR, subtract ImageNet means
  unit,      // value/255 - 0.5
};

PreprocessMode parse_preprocess_mode(std::string_view name);

// Returns a planar 3 x H x W tensor (gray input is replicated). In bgr_mean
// mode plane 0 is blue.
Tensor<float> preprocess(const Image& img, PreprocessMode mode);

}  // namespace gfsr
