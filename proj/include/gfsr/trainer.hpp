#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/losses.hpp"
#include "gfsr/network.hpp"
#include "gfsr/tensor.hpp"

namespace gfsr {

enum class SaliencyClass { true_label, predicted };
SaliencyClass parse_saliency_class(std::string_view text);

struct TrainConfig {
  std::size_t epochs = 800;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossConfig loss;
  SaliencyClass saliency_class = SaliencyClass::true_label;
  bool guided = true;

  void validate() const;
};

inline constexpr std::size_t kGuidedEpochs = 800;
inline constexpr std::size_t kBaselineEpochs = 300;

template <typename T>
struct OptState {
  std::vector<LayerParams<T>> m;
  std::vector<LayerParams<T>> v;
  std::uint64_t t = 0;
};

template <typename T>
OptState<T> init_opt_state(const BasicNetwork<T>& net);

// One Adam update of every parameter in place.
template <typename T>
void adam_step(BasicNetwork<T>& net, const Gradients<T>& grads, OptState<T>& state,
               const TrainConfig& cfg);

// Preprocessed training inputs. masks (full resolution, values in [0,1]) are
// required for every sample when training guided.
struct TrainingSet {
  std::vector<Tensor<float>> inputs;  // C x H x W each
  std::vector<std::size_t> labels;
  std::vector<Grid<double>> masks;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  LossReport loss;        // per-sample means
  double train_acc = 0;
  double alignment = 0;   // mean saliency alignment of the in-loop maps (guided only)
};

// Loss and averaged gradient for one batch; `pooled` holds the relevance
// masks at target-layer resolution (empty when unguided).
template <typename T>
struct BatchResult {
  Gradients<T> grads;
  LossReport sums;
  std::size_t correct = 0;
  double alignment_sum = 0;
};

template <typename T>
BatchResult<T> batch_gradients(const BasicNetwork<T>& net, const Tensor<T>& batch,
                               std::span<const std::size_t> labels,
                               const std::vector<const Grid<double>*>& pooled,
                               const TrainConfig& cfg, std::uint64_t dropout_seed);

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
  Network net;
  std::vector<EpochStats> history;
};

TrainResult train(Network net, const TrainingSet& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// header `epoch,l_cls,mae,mse,focal,l_rel,l_total,train_acc`
std::string format_history(const std::vector<EpochStats>& history);

}  // namespace gfsr
