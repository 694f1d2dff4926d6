#include "gfsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gfsr/concepts.hpp"
#include "gfsr/error.hpp"
#include "gfsr/evaluate.hpp"
#include "gfsr/rng.hpp"
#include "gfsr/saliency.hpp"

namespace gfsr {

SaliencyClass parse_saliency_class(std::string_view text) {
  if (text == "true_label") return SaliencyClass::true_label;
  if (text == "predicted") return SaliencyClass::predicted;
  fail_usage("saliency class must be true_label or predicted, got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0)) fail_usage("train: lr must be > 0");
  if (batch_size < 1) fail_usage("train: batch_size must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail_usage("train: Adam betas must lie in [0,1)");
  if (!(epsilon > 0)) fail_usage("train: Adam epsilon must be > 0");
  loss.validate();
}

template <typename T>
OptState<T> init_opt_state(const BasicNetwork<T>& net) {
  OptState<T> s;
  for (const auto& p : net.params) {
    s.m.push_back({p.weight.zeros_like(), p.bias.zeros_like()});
    s.v.push_back({p.weight.zeros_like(), p.bias.zeros_like()});
  }
  return s;
}

namespace {

template <typename T>
void adam_tensor(Tensor<T>& theta, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v, double c1,
                 double c2, const TrainConfig& cfg) {
  if (theta.shape() != g.shape() || theta.shape() != m.shape() || theta.shape() != v.shape()) {
    fail_data("adam_step: shape mismatch " + shape_string(theta.shape()) + " vs " + shape_string(g.shape()));
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    theta[i] = static_cast<T>(theta[i] - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon));
  }
}

}  // namespace

template <typename T>
void adam_step(BasicNetwork<T>& net, const Gradients<T>& grads, OptState<T>& state,
               const TrainConfig& cfg) {
  if (grads.params.size() != net.params.size() || state.m.size() != net.params.size() ||
      state.v.size() != net.params.size()) {
    fail_data("adam_step: layer count mismatch");
  }
  ++state.t;
  const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < net.params.size(); ++l) {
    if (net.params[l].empty()) continue;
    adam_tensor(net.params[l].weight, grads.params[l].weight, state.m[l].weight, state.v[l].weight, c1, c2, cfg);
    adam_tensor(net.params[l].bias, grads.params[l].bias, state.m[l].bias, state.v[l].bias, c1, c2, cfg);
  }
}

template <typename T>
BatchResult<T> batch_gradients(const BasicNetwork<T>& net, const Tensor<T>& batch,
                               std::span<const std::size_t> labels,
                               const std::vector<const Grid<double>*>& pooled,
                               const TrainConfig& cfg, std::uint64_t dropout_seed) {
  const auto trace = forward(net, batch, Mode::train, dropout_seed);
  const auto& logits = trace.logits();
  const std::size_t n = trace.batch(), classes = logits.dim(1);
  if (labels.size() != n) fail_data("batch: label count mismatch");
  const double inv_n = 1.0 / static_cast<double>(n);

  BatchResult<T> out;
  Tensor<T> logit_grad(logits.shape());
  std::vector<std::size_t> predicted(n);
  std::vector<double> cls_loss(n), rel_loss(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.slice0(i);
    const std::vector<double> z(row.begin(), row.end());
    const auto cl = classification_loss(z, labels[i]);
    cls_loss[i] = cl.value;
    for (std::size_t c = 0; c < classes; ++c) logit_grad[i * classes + c] = static_cast<T>(cl.gradient[c] * inv_n);
    predicted[i] = argmax(z);
    out.correct += predicted[i] == labels[i] ? 1 : 0;
  }

  if (!cfg.guided) {
    out.grads = backward(net, trace, logit_grad);
  } else {
    if (pooled.size() != n) fail_data("batch: relevance mask count mismatch");
    const auto& target = net.arch.target_layer;
    const auto cams = gradcam_batch(net, trace, cfg.saliency_class == SaliencyClass::true_label
                                                    ? labels
                                                    : std::span<const std::size_t>(predicted),
                                    target);
    Tensor<T> act_grad(trace.activation(net.arch, target).shape());
    const std::size_t stride = act_grad.stride0();
    const double scale = cfg.loss.w_rel * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = cams[i].map.values;
      const auto& m = *pooled[i];
      if (m.rows != s.rows || m.cols != s.cols) fail_data("batch: pooled mask does not match the saliency grid");
      const auto rl = relevance_loss(s.values, m.values, cfg.loss);
      out.sums.mae += rl.mae;
      out.sums.mse += rl.mse;
      out.sums.focal += rl.focal;
      out.sums.l_relevance += rl.value;
      rel_loss[i] = rl.value;
      out.alignment_sum += saliency_alignment(s, m);
      const auto da = saliency_backward(cams[i].parts, rl.gradient);
      for (std::size_t j = 0; j < stride; ++j) act_grad[i * stride + j] = static_cast<T>(da[j] * scale);
    }
    out.grads = backward_with_injection(net, trace, logit_grad, target, act_grad);
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.sums.l_cls += cls_loss[i];
    out.sums.l_total += total_loss(cls_loss[i], rel_loss[i], cfg.loss);
  }
  return out;
}

TrainResult train(Network net, const TrainingSet& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t n = data.inputs.size();
  if (n == 0) fail_data("train: empty training set");
  if (data.labels.size() != n) fail_data("train: label count mismatch");
  for (auto y : data.labels) {
    if (y >= net.arch.class_count()) fail_data("train: label " + std::to_string(y) + " out of range");
  }
  std::vector<Grid<double>> pooled;
  if (cfg.guided) {
    if (data.masks.size() != n) {
      fail_data("train: missing relevance mask (" + std::to_string(data.masks.size()) + " masks for " +
                std::to_string(n) + " images)");
    }
    const auto shape = net.arch.output_shapes().at(net.arch.layer_index(net.arch.target_layer));
    for (const auto& m : data.masks) pooled.push_back(pool_mask(m, shape[1], shape[2]));
  }

  TrainResult result{std::move(net), {}};
  auto& model = result.net;
  auto state = init_opt_state(model);
  Rng order_rng(derive_seed(cfg.seed, 101));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t correct = 0;
    double alignment = 0;
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 1000 + epoch);
    for (std::size_t start = 0, b = 0; start < n; start += cfg.batch_size, ++b) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<const Tensor<float>*> inputs;
      std::vector<std::size_t> labels;
      std::vector<const Grid<double>*> masks;
      for (std::size_t i = start; i < stop; ++i) {
        inputs.push_back(&data.inputs[order[i]]);
        labels.push_back(data.labels[order[i]]);
        if (cfg.guided) masks.push_back(&pooled[order[i]]);
      }
      auto res = batch_gradients(model, stack_batch(inputs), labels, masks, cfg, derive_seed(epoch_seed, b));
      if (!std::isfinite(res.sums.l_total)) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "non-finite loss at epoch %zu batch %zu (l_cls=%g, l_rel=%g)", epoch, b,
                      res.sums.l_cls, res.sums.l_relevance);
        fail_numerical(buf);
      }
      adam_step(model, res.grads, state, cfg);
      stats.loss.l_cls += res.sums.l_cls;
      stats.loss.mae += res.sums.mae;
      stats.loss.mse += res.sums.mse;
      stats.loss.focal += res.sums.focal;
      stats.loss.l_relevance += res.sums.l_relevance;
      stats.loss.l_total += res.sums.l_total;
      correct += res.correct;
      alignment += res.alignment_sum;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double* v : {&stats.loss.l_cls, &stats.loss.mae, &stats.loss.mse, &stats.loss.focal,
                      &stats.loss.l_relevance, &stats.loss.l_total}) {
      *v *= inv;
    }
    stats.train_acc = static_cast<double>(correct) * inv;
    stats.alignment = alignment * inv;
    if (on_epoch) on_epoch(stats);
    result.history.push_back(stats);
  }
  return result;
}

std::string format_history(const std::vector<EpochStats>& history) {
  std::string out = "epoch,l_cls,mae,mse,focal,l_rel,l_total,train_acc\n";
  char buf[256];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f\n", h.epoch, h.loss.l_cls, h.loss.mae,
                  h.loss.mse, h.loss.focal, h.loss.l_relevance, h.loss.l_total, h.train_acc);
    out += buf;
  }
  return out;
}

template OptState<float> init_opt_state(const BasicNetwork<float>&);
template OptState<double> init_opt_state(const BasicNetwork<double>&);
template void adam_step(BasicNetwork<float>&, const Gradients<float>&, OptState<float>&, const TrainConfig&);
template void adam_step(BasicNetwork<double>&, const Gradients<double>&, OptState<double>&, const TrainConfig&);
template BatchResult<float> batch_gradients(const BasicNetwork<float>&, const Tensor<float>&,
                                            std::span<const std::size_t>,
                                            const std::vector<const Grid<double>*>&, const TrainConfig&,
                                            std::uint64_t);
template BatchResult<double> batch_gradients(const BasicNetwork<double>&, const Tensor<double>&,
                                             std::span<const std::size_t>,
                                             const std::vector<const Grid<double>*>&, const TrainConfig&,
                                             std::uint64_t);

}  // namespace gfsr
