#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/image.hpp"
#include "gfsr/network.hpp"
#include "gfsr/tensor.hpp"

namespace gfsr {

using Matrix = std::vector<std::vector<std::size_t>>;

struct MetricsReport {
  std::size_t classes = 0;
  Matrix confusion;  // rows = truth, cols = prediction
  double accuracy = 0;
  // Binary: class 1 is positive. Multi-class: macro recall / macro
  // one-vs-rest specificity.
  double sensitivity = 0;
  double specificity = 0;
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
  double auc = 0;  // NaN when undefined (a class absent from truth)
};

// scores[i][c] is the model's score for class c on sample i (may be empty,
// in which case AUC is NaN).
MetricsReport metrics(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                      const std::vector<std::vector<double>>& scores, std::size_t classes);

// Trapezoidal ROC area with tied scores grouped.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

std::string format_metrics(const MetricsReport& r);

enum class PerturbKind { occlude_rect, crop_resize, radial_blur, background_replace };

struct Rect {
  std::size_t row = 0, col = 0, height = 0, width = 0;
};

struct PerturbSpec {
  PerturbKind kind = PerturbKind::occlude_rect;
  Rect rect;                 // occlusion rectangle or crop region
  std::uint8_t fill = 0;     // occlusion value
  double sigma = 1.5;        // radial blur
  double feather = 2.0;      // blend ramp width, pixels
  double radius = 60.0;      // untouched disc radius, pixels
  bool auto_center = true;   // intensity centroid
  double center_row = 0, center_col = 0;
  std::filesystem::path reference_path;  // background_replace
  std::optional<Image> reference;

  std::string describe() const;
};

// Grammar:
//   occlude:ROW,COL,H,W[,FILL]   crop:ROW,COL,H,W
//   blur:RADIUS[,SIGMA[,FEATHER[,CROW,CCOL]]]
//   replace:RADIUS,REFPATH[,FEATHER[,CROW,CCOL]]
PerturbSpec parse_perturb_spec(std::string_view text);

// Separable Gaussian, kernel radius ceil(3 sigma), edges clamped.
Grid<double> gaussian_blur(const Grid<double>& plane, double sigma);

// Bilinear resize (corner-aligned) of every channel.
Image resize_bilinear(const Image& img, std::size_t rows, std::size_t cols);

Image perturb(const Image& img, const PerturbSpec& spec);

struct RobustnessReport {
  std::size_t samples = 0;
  double agreement = 0;
  double flip = 0;
  Matrix flips;  // original prediction -> perturbed prediction
};

RobustnessReport robustness_from_predictions(std::span<const std::size_t> original,
                                             std::span<const std::size_t> perturbed,
                                             std::size_t classes);

std::string format_robustness(const RobustnessReport& r);

// Eval-mode logits for a list of C x H x W inputs.
std::vector<std::vector<double>> predict_logits(const Network& net,
                                                std::span<const Tensor<float>> inputs,
                                                std::size_t batch_size = 32);
std::size_t argmax(std::span<const double> v);

RobustnessReport robustness(const Network& net, std::span<const Image> images,
                            const PerturbSpec& spec, PreprocessMode mode);

// Share of saliency mass on relevant territory: sum(s*m) / (sum(s) + 1e-8).
double saliency_alignment(const Grid<double>& s, const Grid<double>& m);

}  // namespace gfsr
