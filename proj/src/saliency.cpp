#include "gfsr/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "gfsr/error.hpp"

namespace gfsr {

GradCam gradcam_from_parts(std::span<const double> a, std::span<const double> g,
                           std::size_t channels, std::size_t rows, std::size_t cols) {
  const std::size_t plane = rows * cols;
  if (a.size() != channels * plane || g.size() != a.size()) {
    fail_data("gradcam: activation/gradient size mismatch");
  }
  GradCam out;
  auto& parts = out.parts;
  parts.alpha.assign(channels, 0.0);
  for (std::size_t k = 0; k < channels; ++k) {
    double sum = 0;
    for (std::size_t p = 0; p < plane; ++p) sum += g[k * plane + p];
    parts.alpha[k] = sum / static_cast<double>(plane);
  }
  parts.pre_norm = Grid<double>(rows, cols);
  for (std::size_t p = 0; p < plane; ++p) {
    double v = 0;
    for (std::size_t k = 0; k < channels; ++k) v += parts.alpha[k] * a[k * plane + p];
    parts.pre_norm.values[p] = std::max(v, 0.0);
  }
  parts.norm_max = *std::max_element(parts.pre_norm.values.begin(), parts.pre_norm.values.end());
  out.map.values = Grid<double>(rows, cols, 0.0);
  if (parts.norm_max > kSaliencyEpsilon) {
    for (std::size_t p = 0; p < plane; ++p) {
      out.map.values.values[p] = parts.pre_norm.values[p] / parts.norm_max;
    }
  }
  return out;
}

template <typename T>
std::vector<GradCam> gradcam_batch(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                   std::span<const std::size_t> classes, std::string_view layer) {
  const std::size_t n = trace.batch();
  const std::size_t c_count = net.arch.class_count();
  if (classes.size() != n) fail_data("gradcam: one class per sample required");
  Tensor<T> onehot({n, c_count}, T{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (classes[i] >= c_count) {
      fail_data("gradcam: class " + std::to_string(classes[i]) + " out of range");
    }
    onehot[i * c_count + classes[i]] = T{1};
  }
  const auto& act = trace.activation(net.arch, layer);
  const auto grad = activation_gradient(net, trace, onehot, layer);
  const std::size_t ch = act.dim(1), rows = act.dim(2), cols = act.dim(3);
  std::vector<GradCam> out;
  out.reserve(n);
  std::vector<double> a(act.stride0()), g(act.stride0());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(act.data() + i * a.size(), a.size(), a.begin());
    std::copy_n(grad.data() + i * g.size(), g.size(), g.begin());
    auto cam = gradcam_from_parts(a, g, ch, rows, cols);
    cam.map.class_index = classes[i];
    cam.map.layer = std::string(layer);
    out.push_back(std::move(cam));
  }
  return out;
}

template <typename T>
GradCam gradcam(const BasicNetwork<T>& net, const Tensor<T>& input, std::size_t class_idx,
                std::string_view layer) {
  Tensor<T> batch = input;
  if (input.rank() == 3) {
    Shape s = input.shape();
    s.insert(s.begin(), 1);
    batch = Tensor<T>(s, input.storage());
  }
  if (batch.dim(0) != 1) fail_data("gradcam: expected a single input");
  const auto trace = forward(net, batch, Mode::eval);
  const std::size_t cls[1] = {class_idx};
  return std::move(gradcam_batch(net, trace, cls, layer).front());
}

std::vector<double> saliency_backward(const SaliencyComponents& parts,
                                      std::span<const double> dloss_ds) {
  const std::size_t plane = parts.pre_norm.size();
  if (dloss_ds.size() != plane) fail_data("saliency_backward: size mismatch");
  std::vector<double> out(parts.alpha.size() * plane, 0.0);
  if (parts.norm_max <= kSaliencyEpsilon) return out;
  for (std::size_t k = 0; k < parts.alpha.size(); ++k) {
    const double w = parts.alpha[k] / parts.norm_max;
    for (std::size_t p = 0; p < plane; ++p) {
      if (parts.pre_norm.values[p] > 0) out[k * plane + p] = dloss_ds[p] * w;
    }
  }
  return out;
}

Grid<double> upsample_bilinear(const Grid<double>& map, std::size_t rows, std::size_t cols) {
  if (map.rows == 0 || map.cols == 0) fail_data("upsample: empty map");
  if (rows == 0 || cols == 0) fail_data("upsample: zero target size");
  Grid<double> out(rows, cols);
  auto coord = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
    return n_out == 1 ? 0.0
                      : static_cast<double>(i) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = coord(r, rows, map.rows);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, map.rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = coord(c, cols, map.cols);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, map.cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = map.at(y0, x0) + fx * (map.at(y0, x1) - map.at(y0, x0));
      const double bot = map.at(y1, x0) + fx * (map.at(y1, x1) - map.at(y1, x0));
      out.at(r, c) = top + fy * (bot - top);
    }
  }
  return out;
}

std::array<double, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  if (v <= 0.5) return {510.0 * v, 0.0, 0.0};
  return {255.0, 510.0 * (v - 0.5), 0.0};
}

Image render_heatmap(const Grid<double>& map, const Image& img) {
  if (!img.valid()) fail_data("render_heatmap: invalid image");
  const auto up = upsample_bilinear(map, img.height, img.width);
  const auto gray = gray_levels(img);
  Image out(img.height, img.width, 3);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const auto color = heat_color(up.values[p]);
    for (std::size_t c = 0; c < 3; ++c) {
      out.data[3 * p + c] = static_cast<std::uint8_t>(
          std::clamp(std::lround(0.5 * gray.values[p] + 0.5 * color[c]), 0L, 255L));
    }
  }
  return out;
}

void write_heatmap(const Grid<double>& map, const Image& img, const std::filesystem::path& path) {
  save_image(render_heatmap(map, img), path);
}

template GradCam gradcam<float>(const BasicNetwork<float>&, const Tensor<float>&, std::size_t, std::string_view);
template GradCam gradcam<double>(const BasicNetwork<double>&, const Tensor<double>&, std::size_t, std::string_view);
template std::vector<GradCam> gradcam_batch<float>(const BasicNetwork<float>&, const ForwardTrace<float>&,
                                                   std::span<const std::size_t>, std::string_view);
template std::vector<GradCam> gradcam_batch<double>(const BasicNetwork<double>&, const ForwardTrace<double>&,
                                                    std::span<const std::size_t>, std::string_view);

}  // namespace gfsr
