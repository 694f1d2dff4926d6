#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gfsr {

struct LossConfig {
  double alpha = 0.5;   // MAE/MSE balance, [0,1]
  double beta = 1.0;    // focal strength, >= 0
  double gamma = 2.0;   // focal exponent on the target, >= 0
  double w_rel = 1.0;   // relevance weight in the total loss, >= 0

  void validate() const;
};

struct LossReport {
  double l_cls = 0;
  double mae = 0;
  double mse = 0;
  double focal = 0;
  double l_relevance = 0;
  double l_total = 0;
};

struct RelevanceLoss {
  double mae = 0;
  double mse = 0;
  double focal = 0;
  double value = 0;               // alpha*MAE + (1-alpha)*MSE + beta*Focal
  std::vector<double> gradient;   // dL/ds per entry
};

// Saliency s against pooled relevance mask m (same length, values in [0,1]).
// Focal = mean of m^gamma * (m - s)^2.
RelevanceLoss relevance_loss(std::span<const double> s, std::span<const double> m,
                             const LossConfig& cfg);

struct ScalarLoss {
  double value = 0;
  double gradient = 0;
};

// Numerically stable binary cross-entropy on a logit; y in {0,1}.
ScalarLoss bce(double logit, int y);

struct VectorLoss {
  double value = 0;
  std::vector<double> gradient;
};

// log-sum-exp(z) - z_y; gradient softmax(z) - onehot(y).
VectorLoss sparse_ce(std::span<const double> logits, std::size_t y);

// Classification loss on a logit vector: BCE on (z1 - z0) for two classes,
// sparse CE otherwise. The two agree exactly for C = 2.
VectorLoss classification_loss(std::span<const double> logits, std::size_t y);

double total_loss(double cls, double rel, const LossConfig& cfg);

}  // namespace gfsr
