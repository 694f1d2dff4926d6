#include "gfsr/evaluate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "gfsr/error.hpp"
#include "gfsr/saliency.hpp"

namespace gfsr {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail_data("roc_auc: length mismatch");
  std::size_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) fail_data("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0, dfp = 0;
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      (labels[order[j]] == 1 ? dtp : dfp) += 1.0;
    }
    // Trapezoid between consecutive ROC points.
    area += dfp * (tp + tp + dtp) / 2.0;
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricsReport metrics(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                      const std::vector<std::vector<double>>& scores, std::size_t classes) {
  if (preds.size() != truth.size()) fail_data("metrics: length mismatch");
  if (!scores.empty() && scores.size() != truth.size()) fail_data("metrics: score count mismatch");
  if (truth.empty()) fail_data("metrics: no samples");
  MetricsReport r;
  r.classes = classes;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || truth[i] >= classes) fail_data("metrics: label out of range");
    ++r.confusion[truth[i]][preds[i]];
  }
  const double n = static_cast<double>(truth.size());
  double trace = 0;
  for (std::size_t c = 0; c < classes; ++c) trace += static_cast<double>(r.confusion[c][c]);
  r.accuracy = trace / n;

  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  double sum_p = 0, sum_r = 0, sum_f = 0, sum_spec = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = static_cast<double>(r.confusion[c][c]), fn = 0, fp = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      if (o == c) continue;
      fn += static_cast<double>(r.confusion[c][o]);
      fp += static_cast<double>(r.confusion[o][c]);
    }
    const double tn = n - tp - fn - fp;
    const double p = ratio(tp, tp + fp), rec = ratio(tp, tp + fn);
    sum_p += p;
    sum_r += rec;
    sum_f += ratio(2 * p * rec, p + rec);
    sum_spec += ratio(tn, tn + fp);
  }
  const double k = static_cast<double>(classes);
  r.macro_precision = sum_p / k;
  r.macro_recall = sum_r / k;
  r.macro_f1 = sum_f / k;
  if (classes == 2) {
    const double tp = static_cast<double>(r.confusion[1][1]), fn = static_cast<double>(r.confusion[1][0]);
    const double tn = static_cast<double>(r.confusion[0][0]), fp = static_cast<double>(r.confusion[0][1]);
    r.sensitivity = ratio(tp, tp + fn);
    r.specificity = ratio(tn, tn + fp);
  } else {
    r.sensitivity = r.macro_recall;
    r.specificity = sum_spec / k;
  }

  r.auc = std::numeric_limits<double>::quiet_NaN();
  if (!scores.empty()) {
    double total = 0;
    std::size_t used = 0;
    const std::size_t first = classes == 2 ? 1 : 0;
    for (std::size_t c = first; c < classes; ++c) {
      std::vector<double> s(truth.size());
      std::vector<int> y(truth.size());
      std::size_t pos = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (scores[i].size() != classes) fail_data("metrics: score width mismatch");
        s[i] = scores[i][c];
        y[i] = truth[i] == c ? 1 : 0;
        pos += static_cast<std::size_t>(y[i]);
      }
      if (pos == 0 || pos == truth.size()) continue;
      total += roc_auc(s, y);
      ++used;
    }
    if (used && (classes != 2 || used == 1)) r.auc = total / static_cast<double>(used);
  }
  return r;
}

namespace {

std::string format_matrix(const Matrix& m) {
  std::string out;
  for (const auto& row : m) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ",";
      out += std::to_string(row[j]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string format_metrics(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "metric,value\naccuracy,%.6f\nsensitivity,%.6f\nspecificity,%.6f\n"
                "macro_precision,%.6f\nmacro_recall,%.6f\nmacro_f1,%.6f\nauc,%.6f\n",
                r.accuracy, r.sensitivity, r.specificity, r.macro_precision, r.macro_recall,
                r.macro_f1, r.auc);
  return std::string(buf) + "confusion (rows=truth, cols=prediction)\n" + format_matrix(r.confusion);
}

std::string format_robustness(const RobustnessReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "metric,value\nsamples,%zu\nagreement_rate,%.6f\nflip_rate,%.6f\n",
                r.samples, r.agreement, r.flip);
  return std::string(buf) + "flips (rows=original prediction, cols=perturbed prediction)\n" +
         format_matrix(r.flips);
}

// --- perturbations -----------------------------------------------------------

namespace {
std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}
}  // namespace

std::string PerturbSpec::describe() const {
  char buf[256];
  switch (kind) {
    case PerturbKind::occlude_rect:
      std::snprintf(buf, sizeof buf, "occlude:%zu,%zu,%zu,%zu,%u", rect.row, rect.col, rect.height,
                    rect.width, static_cast<unsigned>(fill));
      break;
    case PerturbKind::crop_resize:
      std::snprintf(buf, sizeof buf, "crop:%zu,%zu,%zu,%zu", rect.row, rect.col, rect.height, rect.width);
      break;
    case PerturbKind::radial_blur:
      std::snprintf(buf, sizeof buf, "blur:%g,%g,%g", radius, sigma, feather);
      break;
    case PerturbKind::background_replace:
      std::snprintf(buf, sizeof buf, "replace:%g,%s,%g", radius, reference_path.string().c_str(), feather);
      break;
  }
  if ((kind == PerturbKind::radial_blur || kind == PerturbKind::background_replace) && !auto_center) {
    return std::string(buf) + "," + fmt_g(center_row) + "," + fmt_g(center_col);
  }
  return buf;
}

PerturbSpec parse_perturb_spec(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) fail_usage("perturbation '" + std::string(text) + "': missing ':'");
  const auto kind = text.substr(0, colon);
  std::vector<std::string> args;
  std::string cur;
  for (char ch : text.substr(colon + 1)) {
    if (ch == ',') {
      args.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  args.push_back(cur);
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(args.at(i), &used);
      if (used != args[i].size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail_usage("perturbation '" + std::string(text) + "': bad argument " + std::to_string(i + 1));
    }
  };
  auto count = [&](std::size_t i) {
    const double v = num(i);
    if (v < 0 || v != std::floor(v)) fail_usage("perturbation '" + std::string(text) + "': expected a count");
    return static_cast<std::size_t>(v);
  };
  PerturbSpec p;
  if (kind == "occlude" || kind == "crop") {
    if (args.size() < 4 || args.size() > (kind == "occlude" ? 5u : 4u)) {
      fail_usage("perturbation '" + std::string(text) + "': wrong argument count");
    }
    p.kind = kind == "occlude" ? PerturbKind::occlude_rect : PerturbKind::crop_resize;
    p.rect = {count(0), count(1), count(2), count(3)};
    if (args.size() == 5) {
      const auto f = count(4);
      if (f > 255) fail_usage("perturbation fill must be <= 255");
      p.fill = static_cast<std::uint8_t>(f);
    }
  } else if (kind == "blur" || kind == "replace") {
    const bool blur = kind == "blur";
    p.kind = blur ? PerturbKind::radial_blur : PerturbKind::background_replace;
    std::size_t i = 0;
    p.radius = num(i++);
    if (!blur) {
      if (args.size() < 2) fail_usage("perturbation '" + std::string(text) + "': missing reference path");
      p.reference_path = args[i++];
    } else if (args.size() > i) {
      p.sigma = num(i++);
    }
    if (args.size() > i) p.feather = num(i++);
    if (args.size() == i + 2) {
      p.auto_center = false;
      p.center_row = num(i);
      p.center_col = num(i + 1);
    } else if (args.size() != i) {
      fail_usage("perturbation '" + std::string(text) + "': wrong argument count");
    }
    if (!(p.radius > 0) || !(p.sigma > 0) || p.feather < 0) {
      fail_usage("perturbation '" + std::string(text) + "': radius and sigma must be > 0, feather >= 0");
    }
  } else {
    fail_usage("unknown perturbation kind '" + std::string(kind) + "'");
  }
  if (p.kind != PerturbKind::radial_blur && p.kind != PerturbKind::background_replace &&
      (p.rect.height == 0 || p.rect.width == 0)) {
    fail_usage("perturbation '" + std::string(text) + "': empty rectangle");
  }
  return p;
}

Grid<double> gaussian_blur(const Grid<double>& plane, double sigma) {
  if (!(sigma > 0)) fail_data("gaussian_blur: sigma must be > 0");
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;
  const long rows = static_cast<long>(plane.rows), cols = static_cast<long>(plane.cols);
  Grid<double> tmp(plane.rows, plane.cols), out(plane.rows, plane.cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0;
      for (long i = -radius; i <= radius; ++i) {
        const long cc = std::clamp(c + i, 0L, cols - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * plane.values[static_cast<std::size_t>(r * cols + cc)];
      }
      tmp.values[static_cast<std::size_t>(r * cols + c)] = acc;
    }
  }
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      double acc = 0;
      for (long i = -radius; i <= radius; ++i) {
        const long rr = std::clamp(r + i, 0L, rows - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.values[static_cast<std::size_t>(rr * cols + c)];
      }
      out.values[static_cast<std::size_t>(r * cols + c)] = acc;
    }
  }
  return out;
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Grid<double> channel_plane(const Image& img, std::size_t ch) {
  Grid<double> g(img.height, img.width);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) g.values[p] = img.data[p * img.channels + ch];
  return g;
}

void check_rect(const Rect& r, const Image& img, std::string_view what) {
  if (r.height == 0 || r.width == 0 || r.row + r.height > img.height || r.col + r.width > img.width) {
    fail_data(std::string(what) + " rectangle lies outside the " + std::to_string(img.height) + "x" +
              std::to_string(img.width) + " image");
  }
}

std::array<double, 2> blend_center(const Image& img, const PerturbSpec& spec) {
  if (!spec.auto_center) return {spec.center_row, spec.center_col};
  const auto gray = gray_levels(img);
  double total = 0, sr = 0, sc = 0;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double v = gray.at(r, c);
      total += v;
      sr += v * static_cast<double>(r);
      sc += v * static_cast<double>(c);
    }
  }
  if (total <= 0) return {(img.height - 1) / 2.0, (img.width - 1) / 2.0};
  return {sr / total, sc / total};
}

// Weight of the replacement content: 0 inside `radius`, ramping to 1 over
// `feather` pixels.
double blend_weight(double dist, double radius, double feather) {
  if (feather <= 0) return dist > radius ? 1.0 : 0.0;
  return std::clamp((dist - radius) / feather, 0.0, 1.0);
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t rows, std::size_t cols) {
  Image out(rows, cols, img.channels);
  for (std::size_t ch = 0; ch < img.channels; ++ch) {
    const auto plane = upsample_bilinear(channel_plane(img, ch), rows, cols);
    for (std::size_t p = 0; p < rows * cols; ++p) out.data[p * img.channels + ch] = to_u8(plane.values[p]);
  }
  return out;
}

Image perturb(const Image& img, const PerturbSpec& spec) {
  if (!img.valid()) fail_data("perturb: invalid image");
  switch (spec.kind) {
    case PerturbKind::occlude_rect: {
      check_rect(spec.rect, img, "occlusion");
      Image out = img;
      for (std::size_t r = spec.rect.row; r < spec.rect.row + spec.rect.height; ++r) {
        for (std::size_t c = spec.rect.col; c < spec.rect.col + spec.rect.width; ++c) {
          for (std::size_t ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = spec.fill;
        }
      }
      return out;
    }
    case PerturbKind::crop_resize: {
      check_rect(spec.rect, img, "crop");
      Image crop(spec.rect.height, spec.rect.width, img.channels);
      for (std::size_t r = 0; r < spec.rect.height; ++r) {
        for (std::size_t c = 0; c < spec.rect.width; ++c) {
          for (std::size_t ch = 0; ch < img.channels; ++ch) {
            crop.at(r, c, ch) = img.at(spec.rect.row + r, spec.rect.col + c, ch);
          }
        }
      }
      if (crop.height == img.height && crop.width == img.width) return crop;
      return resize_bilinear(crop, img.height, img.width);
    }
    case PerturbKind::radial_blur:
    case PerturbKind::background_replace: {
      if (!(spec.radius > 0)) fail_data("perturb: radius must be > 0");
      if (spec.feather < 0) fail_data("perturb: feather must be >= 0");
      const bool blur = spec.kind == PerturbKind::radial_blur;
      if (blur && !(spec.sigma > 0)) fail_data("perturb: sigma must be > 0");
      Image reference;
      if (!blur) {
        if (spec.reference) {
          reference = *spec.reference;
        } else if (!spec.reference_path.empty()) {
          reference = load_image(spec.reference_path);
        } else {
          fail_data("perturb: background replacement needs a reference image");
        }
        if (reference.height != img.height || reference.width != img.width) {
          fail_data("perturb: reference image size differs from the input");
        }
        if (reference.channels != img.channels) {
          reference = img.channels == 3 ? to_rgb(reference) : Image{};
          if (!reference.valid() || reference.data.empty()) {
            fail_data("perturb: reference image channel count differs from the input");
          }
        }
      }
      const auto center = blend_center(img, spec);
      Image out = img;
      for (std::size_t ch = 0; ch < img.channels; ++ch) {
        Grid<double> other;
        if (blur) other = gaussian_blur(channel_plane(img, ch), spec.sigma);
        for (std::size_t r = 0; r < img.height; ++r) {
          for (std::size_t c = 0; c < img.width; ++c) {
            const double dist = std::hypot(r - center[0], c - center[1]);
            const double w = blend_weight(dist, spec.radius, spec.feather);
            if (w == 0) continue;
            const double replacement = blur ? other.at(r, c) : reference.at(r, c, ch);
            out.at(r, c, ch) = to_u8((1 - w) * img.at(r, c, ch) + w * replacement);
          }
        }
      }
      return out;
    }
  }
  return img;
}

// --- robustness ---------------------------------------------------------------

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::vector<double>> predict_logits(const Network& net,
                                                std::span<const Tensor<float>> inputs,
                                                std::size_t batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    std::vector<const Tensor<float>*> ptrs;
    for (std::size_t i = start; i < std::min(inputs.size(), start + batch_size); ++i) ptrs.push_back(&inputs[i]);
    const auto trace = forward(net, stack_batch(ptrs), Mode::eval);
    const auto& logits = trace.logits();
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const auto row = logits.slice0(i);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

RobustnessReport robustness_from_predictions(std::span<const std::size_t> original,
                                             std::span<const std::size_t> perturbed,
                                             std::size_t classes) {
  if (original.size() != perturbed.size()) fail_data("robustness: length mismatch");
  if (original.empty()) fail_data("robustness: empty dataset");
  RobustnessReport r;
  r.samples = original.size();
  r.flips.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t agree = 0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original[i] >= classes || perturbed[i] >= classes) fail_data("robustness: class out of range");
    ++r.flips[original[i]][perturbed[i]];
    agree += original[i] == perturbed[i] ? 1 : 0;
  }
  r.agreement = static_cast<double>(agree) / static_cast<double>(r.samples);
  r.flip = static_cast<double>(r.samples - agree) / static_cast<double>(r.samples);
  return r;
}

RobustnessReport robustness(const Network& net, std::span<const Image> images,
                            const PerturbSpec& spec, PreprocessMode mode) {
  if (images.empty()) fail_data("robustness: empty dataset");
  std::vector<Tensor<float>> orig, pert;
  for (const auto& img : images) {
    orig.push_back(preprocess(img, mode));
    pert.push_back(preprocess(perturb(img, spec), mode));
  }
  std::vector<std::size_t> a, b;
  for (const auto& l : predict_logits(net, orig)) a.push_back(argmax(l));
  for (const auto& l : predict_logits(net, pert)) b.push_back(argmax(l));
  return robustness_from_predictions(a, b, net.arch.class_count());
}

double saliency_alignment(const Grid<double>& s, const Grid<double>& m) {
  if (s.rows != m.rows || s.cols != m.cols) fail_data("saliency_alignment: shape mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num += s.values[i] * m.values[i];
    den += s.values[i];
  }
  return num / (den + 1e-8);
}

}  // namespace gfsr
