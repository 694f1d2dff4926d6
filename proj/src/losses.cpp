#include "gfsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gfsr/error.hpp"

namespace gfsr {

void LossConfig::validate() const {
  if (!(alpha >= 0 && alpha <= 1)) fail_usage("loss.alpha must lie in [0,1]");
  if (!(beta >= 0)) fail_usage("loss.beta must be >= 0");
  if (!(gamma >= 0)) fail_usage("loss.gamma must be >= 0");
  if (!(w_rel >= 0)) fail_usage("loss.w_rel must be >= 0");
}

RelevanceLoss relevance_loss(std::span<const double> s, std::span<const double> m,
                             const LossConfig& cfg) {
  if (s.size() != m.size() || s.empty()) {
    fail_data("relevance_loss: saliency has " + std::to_string(s.size()) + " entries, mask " +
              std::to_string(m.size()));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i] >= 0 && s[i] <= 1 && m[i] >= 0 && m[i] <= 1)) {
      fail_data("relevance_loss: values must lie in [0,1]");
    }
  }
  const double n = static_cast<double>(s.size());
  RelevanceLoss out;
  out.gradient.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = m[i] - s[i];
    const double w = std::pow(m[i], cfg.gamma);
    out.mae += std::abs(d);
    out.mse += d * d;
    out.focal += w * d * d;
    const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    out.gradient[i] = (-cfg.alpha * sign - (1 - cfg.alpha) * 2 * d - cfg.beta * 2 * w * d) / n;
  }
  out.mae /= n;
  out.mse /= n;
  out.focal /= n;
  out.value = cfg.alpha * out.mae + (1 - cfg.alpha) * out.mse + cfg.beta * out.focal;
  return out;
}

ScalarLoss bce(double z, int y) {
  const double value = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  const double sigma = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return {value, sigma - y};
}

VectorLoss sparse_ce(std::span<const double> z, std::size_t y) {
  if (y >= z.size()) {
    fail_data("sparse_ce: class " + std::to_string(y) + " out of range for " +
              std::to_string(z.size()) + " logits");
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double v : z) sum += std::exp(v - zmax);
  const double lse = zmax + std::log(sum);
  VectorLoss out;
  out.value = lse - z[y];
  out.gradient.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.gradient[i] = std::exp(z[i] - lse) - (i == y ? 1.0 : 0.0);
  }
  return out;
}

VectorLoss classification_loss(std::span<const double> z, std::size_t y) {
  if (z.size() != 2) return sparse_ce(z, y);
  if (y >= 2) fail_data("classification_loss: class out of range");
  const auto b = bce(z[1] - z[0], static_cast<int>(y));
  return {b.value, {-b.gradient, b.gradient}};
}

double total_loss(double cls, double rel, const LossConfig& cfg) { return cls + cfg.w_rel * rel; }

}  // namespace gfsr
