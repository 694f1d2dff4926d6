#include "gfsr/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "gfsr/error.hpp"
#include "gfsr/rng.hpp"

namespace gfsr {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

bool is_spatial(const Shape& s) { return s.size() == 3; }

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_maxpool: return "globalmaxpool";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

// --- ArchSpec --------------------------------------------------------------

std::size_t ArchSpec::class_count() const {
  if (layers.empty()) fail_data("arch: no layers");
  return layers.back().units;
}

std::size_t ArchSpec::layer_index(std::string_view name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  fail_data("arch: unknown layer '" + std::string(name) + "'");
}

std::vector<Shape> ArchSpec::output_shapes() const {
  std::vector<Shape> out;
  Shape cur = input_shape();
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        if (!is_spatial(cur)) fail_data("arch: conv layer '" + l.name + "' needs a spatial input");
        if (cur[1] + 2 * l.pad < l.kernel || cur[2] + 2 * l.pad < l.kernel) {
          fail_data("arch: conv layer '" + l.name + "' kernel exceeds input");
        }
        cur = {l.units, cur[1] + 2 * l.pad - l.kernel + 1, cur[2] + 2 * l.pad - l.kernel + 1};
        break;
      }
      case LayerKind::maxpool:
        if (!is_spatial(cur) || l.units < 1 || cur[1] < l.units || cur[2] < l.units) {
          fail_data("arch: maxpool layer '" + l.name + "' needs a spatial input of at least its window");
        }
        cur = {cur[0], cur[1] / l.units, cur[2] / l.units};
        break;
      case LayerKind::global_maxpool:
        if (!is_spatial(cur)) fail_data("arch: global max pool '" + l.name + "' needs a spatial input");
        cur = {cur[0]};
        break;
      case LayerKind::dense:
        cur = {l.units};
        break;
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

void ArchSpec::validate() const {
  if (in_channels == 0 || in_rows == 0 || in_cols == 0) fail_data("arch: empty input shape");
  if (layers.empty() || layers.back().kind != LayerKind::dense) {
    fail_data("arch: the last layer must be dense (the logits)");
  }
  std::set<std::string> names;
  for (const auto& l : layers) {
    if (l.name.empty() || !names.insert(l.name).second) {
      fail_data("arch: layer names must be unique and non-empty ('" + l.name + "')");
    }
    if ((l.kind == LayerKind::conv || l.kind == LayerKind::dense) && l.units == 0) {
      fail_data("arch: layer '" + l.name + "' has zero units");
    }
    if (l.kind == LayerKind::conv && l.kernel == 0) fail_data("arch: zero conv kernel");
    if (l.kind == LayerKind::dropout && !(l.rate >= 0.0 && l.rate < 1.0)) {
      fail_data("arch: dropout rate must lie in [0,1)");
    }
  }
  const auto shapes = output_shapes();
  for (const auto* name : {&target_layer, &embed_layer}) {
    if (!is_spatial(shapes[layer_index(*name)])) {
      fail_data("arch: layer '" + *name + "' does not produce a spatial map");
    }
  }
}

std::string ArchSpec::to_text() const {
  std::ostringstream out;
  out << "gfsr-arch 1\n";
  out << "input " << in_channels << " " << in_rows << " " << in_cols << "\n";
  char buf[64];
  for (const auto& l : layers) {
    out << "layer " << l.name << " " << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::conv: out << " " << l.units << " " << l.kernel << " " << l.pad; break;
      case LayerKind::dense:
      case LayerKind::maxpool: out << " " << l.units; break;
      case LayerKind::dropout:
        std::snprintf(buf, sizeof buf, "%.17g", l.rate);
        out << " " << buf;
        break;
      default: break;
    }
    out << "\n";
  }
  out << "target " << target_layer << "\n";
  out << "embed " << embed_layer << "\n";
  return out.str();
}

ArchSpec ArchSpec::parse(std::string_view text) {
  ArchSpec arch;
  arch.layers.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string key;
    row >> key;
    auto bad = [&]() { fail_data("arch line " + std::to_string(lineno) + ": cannot parse '" + line + "'"); };
    if (!header) {
      int version = 0;
      if (key != "gfsr-arch" || !(row >> version) || version != 1) bad();
      header = true;
    } else if (key == "input") {
      if (!(row >> arch.in_channels >> arch.in_rows >> arch.in_cols)) bad();
    } else if (key == "layer") {
      LayerSpec l;
      std::string kind;
      if (!(row >> l.name >> kind)) bad();
      if (kind == "conv") {
        l.kind = LayerKind::conv;
        if (!(row >> l.units >> l.kernel >> l.pad)) bad();
      } else if (kind == "relu") {
        l.kind = LayerKind::relu;
      } else if (kind == "maxpool") {
        l.kind = LayerKind::maxpool;
        if (!(row >> l.units)) bad();
      } else if (kind == "globalmaxpool") {
        l.kind = LayerKind::global_maxpool;
      } else if (kind == "dense") {
        l.kind = LayerKind::dense;
        if (!(row >> l.units)) bad();
      } else if (kind == "dropout") {
        l.kind = LayerKind::dropout;
        if (!(row >> l.rate)) bad();
      } else {
        bad();
      }
      arch.layers.push_back(std::move(l));
    } else if (key == "target") {
      if (!(row >> arch.target_layer)) bad();
    } else if (key == "embed") {
      if (!(row >> arch.embed_layer)) bad();
    } else {
      bad();
    }
  }
  if (!header) fail_data("arch: missing header");
  arch.validate();
  return arch;
}

ArchSpec default_arch(std::size_t classes, std::size_t image_size, std::size_t channels) {
  if (classes < 2) fail_data("arch: need at least two classes");
  ArchSpec a;
  a.in_channels = channels;
  a.in_rows = a.in_cols = image_size;
  auto conv = [](std::string name, std::size_t units) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::conv;
    l.units = units;
    return l;
  };
  auto simple = [](std::string name, LayerKind kind, std::size_t units = 0, double rate = 0.0) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.units = units;
    l.rate = rate;
    return l;
  };
  a.layers = {
      conv("conv1", 16), simple("relu1", LayerKind::relu), simple("pool1", LayerKind::maxpool, 2),
      conv("conv2", 32), simple("relu2", LayerKind::relu), simple("pool2", LayerKind::maxpool, 2),
      conv("conv3", 64), simple("relu3", LayerKind::relu),
      conv("conv4", 64), simple("relu4", LayerKind::relu),
      simple("gmp", LayerKind::global_maxpool),
      simple("fc1", LayerKind::dense, 128), simple("relu5", LayerKind::relu),
      simple("drop", LayerKind::dropout, 0, 0.3),
      simple("logits", LayerKind::dense, classes),
  };
  a.target_layer = "relu3";
  a.embed_layer = "relu3";
  a.validate();
  return a;
}

// --- Network ---------------------------------------------------------------

namespace {

struct ParamShapes {
  Shape weight, bias;
};

std::vector<ParamShapes> param_shapes(const ArchSpec& arch) {
  std::vector<ParamShapes> out;
  Shape cur = arch.input_shape();
  const auto shapes = arch.output_shapes();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind == LayerKind::conv) {
      out.push_back({{l.units, cur[0], l.kernel, l.kernel}, {l.units}});
    } else if (l.kind == LayerKind::dense) {
      out.push_back({{l.units, shape_size(cur)}, {l.units}});
    } else {
      out.push_back({});
    }
    cur = shapes[i];
  }
  return out;
}

}  // namespace

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.weight.size() + p.bias.size();
  return n;
}

template <typename T>
void BasicNetwork<T>::check_consistent() const {
  const auto shapes = param_shapes(arch);
  if (params.size() != shapes.size()) fail_data("network: parameter slots do not match arch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].weight.shape() != shapes[i].weight || params[i].bias.shape() != shapes[i].bias) {
      if (!(shapes[i].weight.empty() && params[i].weight.empty() && params[i].bias.empty())) {
        fail_data("network: parameter shape mismatch at layer '" + arch.layers[i].name + "'");
      }
    }
  }
}

template <typename T>
BasicNetwork<T> init_network(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  BasicNetwork<T> net;
  net.arch = arch;
  Rng rng(seed);
  for (const auto& ps : param_shapes(arch)) {
    LayerParams<T> p;
    if (!ps.weight.empty()) {
      p.weight = Tensor<T>(ps.weight);
      p.bias = Tensor<T>(ps.bias, T{0});
      const double fan_in = static_cast<double>(p.weight.size() / ps.weight[0]);
      const double sd = std::sqrt(2.0 / fan_in);
      for (auto& w : p.weight.values()) w = static_cast<T>(sd * rng.normal());
    }
    net.params.push_back(std::move(p));
  }
  return net;
}

template <typename T>
void Gradients<T>::add(const Gradients& other) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& a = params[i];
    const auto& b = other.params[i];
    for (std::size_t j = 0; j < a.weight.size(); ++j) a.weight[j] += b.weight[j];
    for (std::size_t j = 0; j < a.bias.size(); ++j) a.bias[j] += b.bias[j];
  }
}

template <typename T>
void Gradients<T>::scale(T factor) {
  for (auto& p : params) {
    for (auto& v : p.weight.values()) v *= factor;
    for (auto& v : p.bias.values()) v *= factor;
  }
}

// --- kernels ---------------------------------------------------------------

namespace {

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t rows, std::size_t cols,
            std::size_t kernel, std::size_t pad, std::size_t out_rows, std::size_t out_cols,
            T* col) {
  const std::size_t plane = out_rows * out_cols;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        T* dst = col + ((c * kernel + ki) * kernel + kj) * plane;
        for (std::size_t r = 0; r < out_rows; ++r) {
          const long sr = static_cast<long>(r + ki) - static_cast<long>(pad);
          T* drow = dst + r * out_cols;
          if (sr < 0 || sr >= static_cast<long>(rows)) {
            std::fill_n(drow, out_cols, T{0});
            continue;
          }
          const T* srow = x + (c * rows + static_cast<std::size_t>(sr)) * cols;
          for (std::size_t cc = 0; cc < out_cols; ++cc) {
            const long sc = static_cast<long>(cc + kj) - static_cast<long>(pad);
            drow[cc] = (sc < 0 || sc >= static_cast<long>(cols)) ? T{0} : srow[sc];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t rows, std::size_t cols,
            std::size_t kernel, std::size_t pad, std::size_t out_rows, std::size_t out_cols,
            T* x) {
  const std::size_t plane = out_rows * out_cols;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < kernel; ++ki) {
      for (std::size_t kj = 0; kj < kernel; ++kj) {
        const T* src = col + ((c * kernel + ki) * kernel + kj) * plane;
        for (std::size_t r = 0; r < out_rows; ++r) {
          const long sr = static_cast<long>(r + ki) - static_cast<long>(pad);
          if (sr < 0 || sr >= static_cast<long>(rows)) continue;
          T* xrow = x + (c * rows + static_cast<std::size_t>(sr)) * cols;
          const T* srow = src + r * out_cols;
          for (std::size_t cc = 0; cc < out_cols; ++cc) {
            const long sc = static_cast<long>(cc + kj) - static_cast<long>(pad);
            if (sc >= 0 && sc < static_cast<long>(cols)) xrow[sc] += srow[cc];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
ForwardTrace<T> forward(const BasicNetwork<T>& net, const Tensor<T>& batch, Mode mode,
                        std::uint64_t rng_seed) {
  const auto& arch = net.arch;
  const Shape in_shape = arch.input_shape();
  if (batch.rank() != 4 || batch.dim(0) == 0 ||
      !std::equal(in_shape.begin(), in_shape.end(), batch.shape().begin() + 1)) {
    fail_data("forward: batch shape " + shape_string(batch.shape()) + " does not match input " +
              shape_string(in_shape));
  }
  const std::size_t n = batch.dim(0);
  const auto shapes = arch.output_shapes();

  ForwardTrace<T> trace;
  trace.mode = mode;
  trace.input = batch;
  trace.outputs.resize(arch.layers.size());
  trace.argmax.resize(arch.layers.size());
  trace.dropout_masks.resize(arch.layers.size());
  Rng rng(rng_seed);
  std::vector<T> col;

  Shape cur = in_shape;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const auto& l = arch.layers[li];
    const Tensor<T>& x = li == 0 ? trace.input : trace.outputs[li - 1];
    Shape out_shape = shapes[li];
    out_shape.insert(out_shape.begin(), n);
    Tensor<T> y(out_shape);
    const std::size_t in_per = x.stride0(), out_per = y.stride0();

    switch (l.kind) {
      case LayerKind::conv: {
        const std::size_t cin = cur[0], orows = shapes[li][1], ocols = shapes[li][2];
        const std::size_t ckk = cin * l.kernel * l.kernel, plane = orows * ocols;
        col.resize(ckk * plane);
        ConstMatMap<T> w(net.params[li].weight.data(), l.units, ckk);
        ConstVecMap<T> b(net.params[li].bias.data(), l.units);
        for (std::size_t s = 0; s < n; ++s) {
          im2col(x.data() + s * in_per, cin, cur[1], cur[2], l.kernel, l.pad, orows, ocols, col.data());
          MatMap<T> out(y.data() + s * out_per, l.units, plane);
          out.noalias() = w * ConstMatMap<T>(col.data(), ckk, plane);
          out.colwise() += b;
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
        break;
      case LayerKind::maxpool: {
        const std::size_t ch = cur[0], rows = cur[1], cols = cur[2];
        const std::size_t orows = shapes[li][1], ocols = shapes[li][2], win = l.units;
        auto& idx = trace.argmax[li];
        idx.resize(y.size());
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t c = 0; c < ch; ++c) {
            for (std::size_t r = 0; r < orows; ++r) {
              for (std::size_t cc = 0; cc < ocols; ++cc) {
                std::size_t best = 0;
                T best_v = -std::numeric_limits<T>::infinity();
                for (std::size_t dr = 0; dr < win; ++dr) {
                  for (std::size_t dc = 0; dc < win; ++dc) {
                    const std::size_t src = s * in_per + (c * rows + r * win + dr) * cols + cc * win + dc;
                    if (x[src] > best_v) {  // strict: ties keep the first in row-major order
                      best_v = x[src];
                      best = src;
                    }
                  }
                }
                const std::size_t dst = s * out_per + (c * orows + r) * ocols + cc;
                y[dst] = best_v;
                idx[dst] = static_cast<std::uint32_t>(best);
              }
            }
          }
        }
        break;
      }
      case LayerKind::global_maxpool: {
        const std::size_t ch = cur[0], plane = cur[1] * cur[2];
        auto& idx = trace.argmax[li];
        idx.resize(y.size());
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = s * in_per + c * plane;
            std::size_t best = base;
            for (std::size_t p = 1; p < plane; ++p) {
              if (x[base + p] > x[best]) best = base + p;
            }
            y[s * ch + c] = x[best];
            idx[s * ch + c] = static_cast<std::uint32_t>(best);
          }
        }
        break;
      }
      case LayerKind::dense: {
        ConstMatMap<T> w(net.params[li].weight.data(), l.units, in_per);
        ConstMatMap<T> xin(x.data(), n, in_per);
        MatMap<T> out(y.data(), n, l.units);
        out.noalias() = xin * w.transpose();
        out.rowwise() += ConstVecMap<T>(net.params[li].bias.data(), l.units).transpose();
        break;
      }
      case LayerKind::dropout: {
        if (mode == Mode::eval || l.rate == 0.0) {
          y = x;
          break;
        }
        Tensor<T> mask(y.shape());
        const T keep = static_cast<T>(1.0 / (1.0 - l.rate));
        for (std::size_t i = 0; i < y.size(); ++i) {
          mask[i] = rng.uniform() >= l.rate ? keep : T{0};
          y[i] = x[i] * mask[i];
        }
        trace.dropout_masks[li] = std::move(mask);
        break;
      }
    }
    trace.outputs[li] = std::move(y);
    cur = shapes[li];
  }
  return trace;
}

namespace {

template <typename T>
struct SweepOptions {
  std::size_t top = 0;           // layer whose output gradient seeds the sweep
  std::size_t stop = 0;          // lowest layer whose output gradient is needed
  bool parameters = true;
  bool keep_activations = true;
  std::size_t inject_layer = SIZE_MAX;
  const Tensor<T>* inject = nullptr;
};

template <typename T>
void check_trace(const BasicNetwork<T>& net, const ForwardTrace<T>& trace) {
  const auto shapes = net.arch.output_shapes();
  if (trace.outputs.size() != shapes.size()) fail_data("backward: trace does not belong to this network");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& s = trace.outputs[i].shape();
    if (s.size() != shapes[i].size() + 1 || !std::equal(shapes[i].begin(), shapes[i].end(), s.begin() + 1)) {
      fail_data("backward: trace does not belong to this network (layer '" + net.arch.layers[i].name + "')");
    }
  }
}

template <typename T>
Gradients<T> zero_gradients(const BasicNetwork<T>& net) {
  Gradients<T> g;
  for (const auto& p : net.params) {
    g.params.push_back({p.weight.zeros_like(), p.bias.zeros_like()});
  }
  g.activations.resize(net.params.size());
  return g;
}

// Runs the reverse sweep from opts.top down to opts.stop. Returns the
// gradient with respect to the output of layer opts.stop.
template <typename T>
Tensor<T> sweep(const BasicNetwork<T>& net, const ForwardTrace<T>& trace, Tensor<T> grad,
                const SweepOptions<T>& opts, Gradients<T>* out) {
  const auto& arch = net.arch;
  const std::size_t n = trace.batch();
  const auto shapes = arch.output_shapes();
  std::vector<T> col, dcol;
  for (std::size_t li = opts.top + 1; li-- > opts.stop;) {
    if (li == opts.inject_layer) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += (*opts.inject)[i];
    }
    if (out && opts.keep_activations) out->activations[li] = grad;
    if (li == opts.stop && !opts.parameters) return grad;

    const auto& l = arch.layers[li];
    const Tensor<T>& x = li == 0 ? trace.input : trace.outputs[li - 1];
    const Tensor<T>& y = trace.outputs[li];
    const Shape cur = li == 0 ? arch.input_shape() : shapes[li - 1];
    const bool need_input = li > opts.stop;
    Tensor<T> dx;
    if (need_input) dx = Tensor<T>(x.shape(), T{0});
    const std::size_t in_per = x.stride0(), out_per = y.stride0();

    switch (l.kind) {
      case LayerKind::conv: {
        const std::size_t cin = cur[0], orows = shapes[li][1], ocols = shapes[li][2];
        const std::size_t ckk = cin * l.kernel * l.kernel, plane = orows * ocols;
        ConstMatMap<T> w(net.params[li].weight.data(), l.units, ckk);
        if (opts.parameters) col.resize(ckk * plane);
        if (need_input) dcol.resize(ckk * plane);
        for (std::size_t s = 0; s < n; ++s) {
          ConstMatMap<T> dy(grad.data() + s * out_per, l.units, plane);
          if (opts.parameters) {
            im2col(x.data() + s * in_per, cin, cur[1], cur[2], l.kernel, l.pad, orows, ocols, col.data());
            MatMap<T> dw(out->params[li].weight.data(), l.units, ckk);
            dw.noalias() += dy * ConstMatMap<T>(col.data(), ckk, plane).transpose();
            // plain loops: Eigen reductions peel by address and are not bit-reproducible
            T* db = out->params[li].bias.data();
            const T* g = grad.data() + s * out_per;
            for (std::size_t u = 0; u < l.units; ++u) {
              T acc{0};
              for (std::size_t p = 0; p < plane; ++p) acc += g[u * plane + p];
              db[u] += acc;
            }
          }
          if (need_input) {
            MatMap<T> dc(dcol.data(), ckk, plane);
            dc.noalias() = w.transpose() * dy;
            col2im(dcol.data(), cin, cur[1], cur[2], l.kernel, l.pad, orows, ocols, dx.data() + s * in_per);
          }
        }
        break;
      }
      case LayerKind::relu:
        if (need_input) {
          for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = y[i] > T{0} ? grad[i] : T{0};
        }
        break;
      case LayerKind::maxpool:
      case LayerKind::global_maxpool:
        if (need_input) {
          const auto& idx = trace.argmax[li];
          for (std::size_t i = 0; i < grad.size(); ++i) dx[idx[i]] += grad[i];
        }
        break;
      case LayerKind::dense: {
        ConstMatMap<T> dy(grad.data(), n, l.units);
        if (opts.parameters) {
          MatMap<T> dw(out->params[li].weight.data(), l.units, in_per);
          dw.noalias() += dy.transpose() * ConstMatMap<T>(x.data(), n, in_per);
          T* db = out->params[li].bias.data();
          for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t u = 0; u < l.units; ++u) db[u] += grad[s * l.units + u];
          }
        }
        if (need_input) {
          MatMap<T> d(dx.data(), n, in_per);
          d.noalias() = dy * ConstMatMap<T>(net.params[li].weight.data(), l.units, in_per);
        }
        break;
      }
      case LayerKind::dropout:
        if (need_input) {
          const auto& mask = trace.dropout_masks[li];
          for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = mask.empty() ? grad[i] : grad[i] * mask[i];
        }
        break;
    }
    if (!need_input) return grad;
    grad = std::move(dx);
  }
  return grad;
}

template <typename T>
void check_grad_shape(const Tensor<T>& g, const Tensor<T>& ref, std::string_view what) {
  if (g.shape() != ref.shape()) {
    fail_data(std::string(what) + " shape " + shape_string(g.shape()) + " does not match " +
              shape_string(ref.shape()));
  }
}

}  // namespace

template <typename T>
Gradients<T> backward(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                      const Tensor<T>& logit_grad) {
  check_trace(net, trace);
  check_grad_shape(logit_grad, trace.logits(), "logit_grad");
  auto g = zero_gradients(net);
  SweepOptions<T> opts;
  opts.top = net.arch.layers.size() - 1;
  sweep(net, trace, logit_grad, opts, &g);
  return g;
}

template <typename T>
Gradients<T> inject_backward_at(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                std::string_view layer, const Tensor<T>& act_grad) {
  check_trace(net, trace);
  const std::size_t li = net.arch.layer_index(layer);
  check_grad_shape(act_grad, trace.outputs[li], "act_grad");
  auto g = zero_gradients(net);
  SweepOptions<T> opts;
  opts.top = li;
  sweep(net, trace, act_grad, opts, &g);
  return g;
}

template <typename T>
Gradients<T> backward_with_injection(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                                     const Tensor<T>& logit_grad, std::string_view layer,
                                     const Tensor<T>& act_grad) {
  check_trace(net, trace);
  check_grad_shape(logit_grad, trace.logits(), "logit_grad");
  const std::size_t li = net.arch.layer_index(layer);
  check_grad_shape(act_grad, trace.outputs[li], "act_grad");
  auto g = zero_gradients(net);
  SweepOptions<T> opts;
  opts.top = net.arch.layers.size() - 1;
  opts.inject_layer = li;
  opts.inject = &act_grad;
  opts.keep_activations = false;
  sweep(net, trace, logit_grad, opts, &g);
  return g;
}

template <typename T>
Tensor<T> activation_gradient(const BasicNetwork<T>& net, const ForwardTrace<T>& trace,
                              const Tensor<T>& logit_grad, std::string_view layer) {
  check_trace(net, trace);
  check_grad_shape(logit_grad, trace.logits(), "logit_grad");
  SweepOptions<T> opts;
  opts.top = net.arch.layers.size() - 1;
  opts.stop = net.arch.layer_index(layer);
  opts.parameters = false;
  opts.keep_activations = false;
  return sweep<T>(net, trace, logit_grad, opts, nullptr);
}

template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& samples) {
  if (samples.empty()) fail_data("stack_batch: no samples");
  Shape shape = samples.front()->shape();
  shape.insert(shape.begin(), samples.size());
  Tensor<T> out(shape);
  const std::size_t per = samples.front()->size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->shape() != samples.front()->shape()) fail_data("stack_batch: ragged samples");
    std::copy(samples[i]->data(), samples[i]->data() + per, out.data() + i * per);
  }
  return out;
}

#define GFSR_INSTANTIATE(T)                                                                    \
  template struct BasicNetwork<T>;                                                             \
  template struct Gradients<T>;                                                                \
  template BasicNetwork<T> init_network<T>(const ArchSpec&, std::uint64_t);                    \
  template ForwardTrace<T> forward<T>(const BasicNetwork<T>&, const Tensor<T>&, Mode, std::uint64_t); \
  template Gradients<T> backward<T>(const BasicNetwork<T>&, const ForwardTrace<T>&, const Tensor<T>&); \
  template Gradients<T> inject_backward_at<T>(const BasicNetwork<T>&, const ForwardTrace<T>&,  \
                                              std::string_view, const Tensor<T>&);             \
  template Gradients<T> backward_with_injection<T>(const BasicNetwork<T>&, const ForwardTrace<T>&, \
                                                   const Tensor<T>&, std::string_view, const Tensor<T>&); \
  template Tensor<T> activation_gradient<T>(const BasicNetwork<T>&, const ForwardTrace<T>&,    \
                                            const Tensor<T>&, std::string_view);               \
  template Tensor<T> stack_batch<T>(const std::vector<const Tensor<T>*>&);
GFSR_INSTANTIATE(float)
GFSR_INSTANTIATE(double)
#undef GFSR_INSTANTIATE

}  // namespace gfsr
