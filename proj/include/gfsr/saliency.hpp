#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/image.hpp"
#include "gfsr/network.hpp"
#include "gfsr/tensor.hpp"

namespace gfsr {

inline constexpr double kSaliencyEpsilon = 1e-8;

struct SaliencyMap {
  Grid<double> values;  // in [0,1], target-layer resolution
  std::size_t class_index = 0;
  std::string layer;
};

struct SaliencyComponents {
  std::vector<double> alpha;  // spatial mean of the class-score gradient per channel
  Grid<double> pre_norm;      // ReLU(sum_k alpha_k A_k)
  double norm_max = 0;        // max of pre_norm
};

struct GradCam {
  SaliencyMap map;
  SaliencyComponents parts;
};

// Grad-CAM from one sample's activation A and gradient dy_c/dA, both C x h x w.
GradCam gradcam_from_parts(std::span<const double> activation, std::span<const double> gradient,
                           std::size_t channels, std::size_t rows, std::size_t cols);

// Runs an eval-mode forward of one C x H x W input and explains class_idx
// (score = logit) at `layer`.
template <typename T>
GradCam gradcam(const BasicNetwork<T>& net, const Tensor<T>& input, std::size_t class_idx,
                std::string_view layer);

// Grad-CAM for every sample of an existing trace; classes[i] is explained for
// sample i.
template <typename T>
std::vector<GradCam> gradcam_batch(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                   std::span<const std::size_t> classes, std::string_view layer);

// dL/dA for one sample given dL/ds, holding alpha and the normaliser fixed:
// dL/dA_k(x) = dL/ds(x) * alpha_k / M * [pre_norm(x) > 0]. Zero when M <= eps.
std::vector<double> saliency_backward(const SaliencyComponents& parts,
                                      std::span<const double> dloss_ds);

// Corner-aligned bilinear resize.
Grid<double> upsample_bilinear(const Grid<double>& map, std::size_t rows, std::size_t cols);

// Black -> red -> yellow ramp for v in [0,1].
std::array<double, 3> heat_color(double v);

// 0.5 * gray(img) + 0.5 * colormap(map upsampled to the image size), as RGB.
Image render_heatmap(const Grid<double>& map, const Image& img);
void write_heatmap(const Grid<double>& map, const Image& img, const std::filesystem::path& path);

}  // namespace gfsr
