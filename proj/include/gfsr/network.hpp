#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gfsr/tensor.hpp"

namespace gfsr {

enum class LayerKind { conv, relu, maxpool, global_maxpool, dense, dropout };

std::string_view layer_kind_name(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;   // conv: output channels; dense: outputs; maxpool: window
  std::size_t kernel = 3;  // conv only, stride 1
  std::size_t pad = 1;     // conv only
  double rate = 0.0;       // dropout only

  bool operator==(const LayerSpec&) const = default;
};

// Ordered layer list. The last layer must be dense; its width is the class
// count. Dense layers flatten whatever they receive.
struct ArchSpec {
  std::size_t in_channels = 3;
  std::size_t in_rows = 64;
  std::size_t in_cols = 64;
  std::vector<LayerSpec> layers;
  std::string target_layer;  // Grad-CAM / relevance-loss layer
  std::string embed_layer;   // segment embedding layer

  std::size_t class_count() const;
  std::size_t layer_index(std::string_view name) const;
  Shape input_shape() const { return {in_channels, in_rows, in_cols}; }
  // Per-sample output shape of every layer.
  std::vector<Shape> output_shapes() const;
  void validate() const;

  std::string to_text() const;
  static ArchSpec parse(std::string_view text);

  bool operator==(const ArchSpec&) const = default;
};

// Three conv blocks (16, 32, 64 channels; 2x2 max pool after the first two),
// a fourth 64-channel conv, then global max pool -> dense 128 -> ReLU ->
// dropout 0.3 -> dense C. Target and embedding layer: block-3 post-ReLU map.
ArchSpec default_arch(std::size_t classes, std::size_t image_size = 64,
                      std::size_t channels = 3);

template <typename T>
struct LayerParams {
  Tensor<T> weight;
  Tensor<T> bias;

  bool empty() const { return weight.empty(); }
  bool operator==(const LayerParams&) const = default;
};

template <typename T>
struct BasicNetwork {
  ArchSpec arch;
  std::vector<LayerParams<T>> params;  // one slot per layer, empty if parameter-free

  std::size_t parameter_count() const;
  void check_consistent() const;

  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out;
    out.arch = arch;
    for (const auto& p : params) out.params.push_back({p.weight.template cast<U>(), p.bias.template cast<U>()});
    return out;
  }

  bool operator==(const BasicNetwork&) const = default;
};

using Network = BasicNetwork<float>;

enum class Mode { train, eval };

template <typename T>
struct ForwardTrace {
  Mode mode = Mode::eval;
  Tensor<T> input;                               // N x C x H x W
  std::vector<Tensor<T>> outputs;                // post-layer activation per layer, batched
  std::vector<std::vector<std::uint32_t>> argmax;  // pooling layers: source index per output
  std::vector<Tensor<T>> dropout_masks;          // train mode: per-element scale (0 or 1/(1-rate))

  std::size_t batch() const { return input.dim(0); }
  const Tensor<T>& logits() const { return outputs.back(); }
  const Tensor<T>& activation(const ArchSpec& arch, std::string_view layer) const {
    return outputs.at(arch.layer_index(layer));
  }
};

template <typename T>
struct Gradients {
  std::vector<LayerParams<T>> params;
  // d/d(output of layer i). Empty for layers the sweep did not reach.
  std::vector<Tensor<T>> activations;

  void add(const Gradients& other);
  void scale(T factor);
};

template <typename T>
BasicNetwork<T> init_network(const ArchSpec& arch, std::uint64_t seed);

// `batch` is N x C x H x W. Train mode applies inverted dropout drawn from
// rng_seed and records the mask.
template <typename T>
ForwardTrace<T> forward(const BasicNetwork<T>& net, const Tensor<T>& batch, Mode mode,
                        std::uint64_t rng_seed = 0);

// Reverse-mode gradients of <logits, logit_grad>.
template <typename T>
Gradients<T> backward(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                      const Tensor<T>& logit_grad);

// Gradients of <A_layer, act_grad>. Parameters above `layer` get zeros.
template <typename T>
Gradients<T> inject_backward_at(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                std::string_view layer, const Tensor<T>& act_grad);

// backward(logit_grad) + inject_backward_at(layer, act_grad) in one sweep.
template <typename T>
Gradients<T> backward_with_injection(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                     const Tensor<T>& logit_grad, std::string_view layer,
                                     const Tensor<T>& act_grad);

// d<logits, logit_grad>/dA_layer only; no parameter gradients are formed.
template <typename T>
Tensor<T> activation_gradient(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                              const Tensor<T>& logit_grad, std::string_view layer);

// Stacks per-sample C x H x W tensors into one batch.
template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& samples);

}  // namespace gfsr
