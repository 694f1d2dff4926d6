#include "gfsr/image.hpp"

#include <array>
#include <cctype>
#include <cmath>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"

namespace gfsr {

Image::Image(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill)
    : height(h), width(w), channels(c), data(h * w * c, fill) {
  if (c != 1 && c != 3) fail_data("image channels must be 1 or 3");
}

bool Image::valid() const noexcept {
  return (channels == 1 || channels == 3) &&
         data.size() == height * width * channels;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() &&
           std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 30)) fail_data("pnm: header value too large");
      ++pos_;
    }
    if (pos_ == start) fail_data("pnm: malformed header");
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() ||
        !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      fail_data("pnm: malformed header");
    }
    return pos_ + 1;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Image decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    fail_data("pnm: expected P5 or P6 magic");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader header(bytes);
  const std::size_t width = header.number();
  const std::size_t height = header.number();
  const std::size_t maxval = header.number();
  if (maxval != 255) fail_data("pnm: only maxval 255 is supported");
  if (width == 0 || height == 0) fail_data("pnm: zero-sized image");
  const std::size_t offset = header.payload_offset();
  const std::size_t expected = width * height * channels;
  if (bytes.size() < offset + expected) {
    fail_data("pnm: truncated payload (expected " + std::to_string(expected) +
              " bytes, found " + std::to_string(bytes.size() - std::min(offset, bytes.size())) + ")");
  }
  Image img(height, width, channels);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + offset), expected,
              img.data.begin());
  return img;
}

std::string encode_pnm(const Image& img) {
  if (!img.valid()) fail_data("pnm: invalid image");
  std::string out = img.channels == 1 ? "P5\n" : "P6\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  return out;
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail_data("missing image file " + path.string());
  try {
    return decode_pnm(read_file(path));
  } catch (const Error& e) {
    fail_data(path.string() + ": " + e.what());
  }
}

void save_image(const Image& img, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pnm(img));
}

Grid<double> gray_levels(const Image& img) {
  Grid<double> out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (img.channels == 1) {
      out.values[i] = img.data[i];
    } else {
      const auto* p = &img.data[i * 3];
      out.values[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  return out;
}

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = img.data[i];
  }
  return out;
}

PreprocessMode parse_preprocess_mode(std::string_view name) {
  if (name == "bgr-mean") return PreprocessMode::bgr_mean;
  if (name == "unit") return PreprocessMode::unit;
  fail_usage("unknown preprocess mode '" + std::string(name) + "'");
}

Tensor<float> preprocess(const Image& img, PreprocessMode mode) {
  if (!img.valid()) fail_data("preprocess: invalid image");
  constexpr std::array<double, 3> kBgrMean = {103.939, 116.779, 123.68};
  const std::size_t plane = img.pixel_count();
  Tensor<float> out({3, img.height, img.width});
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = img.channels == 1 ? 0 : c;
      const double v = img.data[i * img.channels + src];
      if (mode == PreprocessMode::unit) {
        out[c * plane + i] = static_cast<float>(v / 255.0 - 0.5);
      } else {
        // R,G,B -> B,G,R
        out[(2 - c) * plane + i] = static_cast<float>(v - kBgrMean[2 - c]);
      }
    }
  }
  return out;
}

}  // namespace gfsr
