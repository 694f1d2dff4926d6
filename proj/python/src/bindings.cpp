#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>
#include <vector>

#include "gfsr/checkpoint.hpp"
#include "gfsr/cli.hpp"
#include "gfsr/concepts.hpp"
#include "gfsr/error.hpp"
#include "gfsr/evaluate.hpp"
#include "gfsr/image.hpp"
#include "gfsr/losses.hpp"
#include "gfsr/network.hpp"
#include "gfsr/saliency.hpp"
#include "gfsr/superpixel.hpp"
#include "gfsr/synth.hpp"

namespace py = pybind11;
using namespace gfsr;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image image_from_array(const U8Array& arr) {
  if (arr.ndim() != 2 && arr.ndim() != 3) throw py::value_error("image must be HxW or HxWxC");
  const std::size_t channels = arr.ndim() == 3 ? arr.shape(2) : 1;
  if (channels != 1 && channels != 3) throw py::value_error("image needs 1 or 3 channels");
  Image img(arr.shape(0), arr.shape(1), channels);
  std::memcpy(img.data.data(), arr.data(), img.data.size());
  return img;
}

py::array image_to_array(const Image& img) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)};
  if (img.channels != 1) shape.push_back(static_cast<py::ssize_t>(img.channels));
  py::array_t<std::uint8_t> out(shape);
  std::memcpy(out.mutable_data(), img.data.data(), img.data.size());
  return out;
}

template <typename T>
py::array_t<T> grid_to_array(const Grid<T>& g) {
  py::array_t<T> out({static_cast<py::ssize_t>(g.rows), static_cast<py::ssize_t>(g.cols)});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

Grid<double> grid_from_array(const F64Array& arr) {
  if (arr.ndim() != 2) throw py::value_error("expected a 2-d array");
  Grid<double> g(arr.shape(0), arr.shape(1));
  std::copy(arr.data(), arr.data() + g.size(), g.values.begin());
  return g;
}

std::vector<std::vector<double>> rows_from_array(const F64Array& arr) {
  if (arr.ndim() != 2) throw py::value_error("expected an (n, d) array");
  std::vector<std::vector<double>> rows(arr.shape(0));
  const double* p = arr.data();
  for (auto& r : rows) {
    r.assign(p, p + arr.shape(1));
    p += arr.shape(1);
  }
  return rows;
}

py::array_t<double> rows_to_array(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows.empty() ? 0 : rows.front().size();
  py::array_t<double> out({static_cast<py::ssize_t>(rows.size()), static_cast<py::ssize_t>(d)});
  double* p = out.mutable_data();
  for (const auto& r : rows) p = std::copy(r.begin(), r.end(), p);
  return out;
}

std::span<const double> span_of(const F64Array& arr) { return {arr.data(), static_cast<std::size_t>(arr.size())}; }

py::array_t<std::int32_t> labels_array(const SegmentMap& seg) {
  py::array_t<std::int32_t> out({static_cast<py::ssize_t>(seg.rows), static_cast<py::ssize_t>(seg.cols)});
  std::copy(seg.labels.begin(), seg.labels.end(), out.mutable_data());
  return out;
}

SegmentMap segment_map_from(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw py::value_error("labels must be 2-d");
  SegmentMap seg;
  seg.rows = arr.shape(0);
  seg.cols = arr.shape(1);
  seg.labels.assign(arr.data(), arr.data() + arr.size());
  seg.recount();
  return seg;
}

}  // namespace

PYBIND11_MODULE(_gfsr, m) {
  m.doc() = "Concept-guided saliency training: native core";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numerical) {
        PyErr_SetString(PyExc_ArithmeticError, e.what());
      } else {
        PyErr_SetString(PyExc_ValueError, e.what());
      }
    }
  });

  m.def("load_image", [](const std::filesystem::path& p) { return image_to_array(load_image(p)); },
        py::arg("path"));
  m.def("save_image", [](const U8Array& a, const std::filesystem::path& p) { save_image(image_from_array(a), p); },
        py::arg("image"), py::arg("path"));

  m.def(
      "slic",
      [](const U8Array& a, std::size_t k, double compactness, std::size_t max_iter) {
        SlicParams params;
        params.k = k;
        params.compactness = compactness;
        params.max_iter = max_iter;
        const Image img = image_from_array(a);
        SegmentMap seg;
        {
          py::gil_scoped_release release;
          seg = slic(rgb_to_lab(img), params);
        }
        return labels_array(seg);
      },
      py::arg("image"), py::arg("k") = 50, py::arg("compactness") = 10.0, py::arg("max_iter") = 10,
      "Superpixel labels (int32, HxW, dense from 0).");
  m.def(
      "enforce_connectivity",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& raw, std::size_t min_size) {
        if (raw.ndim() != 2) throw py::value_error("labels must be 2-d");
        std::vector<std::int32_t> v(raw.data(), raw.data() + raw.size());
        return labels_array(enforce_connectivity(raw.shape(0), raw.shape(1), v, min_size));
      },
      py::arg("labels"), py::arg("min_size"));

  m.def(
      "fit_concepts",
      [](const F64Array& data, std::size_t k, std::uint64_t seed) {
        const auto fit = fit_concepts(rows_from_array(data), k, seed);
        py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(fit.labels.size()));
        std::copy(fit.labels.begin(), fit.labels.end(), labels.mutable_data());
        return py::make_tuple(rows_to_array(fit.model.centroids), labels, fit.inertia);
      },
      py::arg("data"), py::arg("k"), py::arg("seed"),
      "Returns (centroids, labels, inertia history).");
  m.def("score_concepts", [](const std::vector<std::size_t>& annotated, std::size_t k) {
    return score_concepts(annotated, k);
  }, py::arg("annotated"), py::arg("k"));
  m.def(
      "relevance_mask",
      [](const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& labels,
         const std::vector<std::size_t>& seg_concepts, const std::vector<double>& scores) {
        const SegmentMap seg = segment_map_from(labels);
        ConceptModel model;
        model.centroids.assign(scores.size(), std::vector<double>{0.0});
        model.scores = scores;
        return grid_to_array(build_relevance_mask(seg, seg_concepts, model));
      },
      py::arg("labels"), py::arg("segment_concepts"), py::arg("concept_scores"),
      "Per-pixel relevance from segment concept assignments and concept scores.");
  m.def("pool_mask", [](const F64Array& mask, std::size_t rows, std::size_t cols) {
    return grid_to_array(pool_mask(grid_from_array(mask), rows, cols));
  }, py::arg("mask"), py::arg("rows"), py::arg("cols"));

  m.def(
      "relevance_loss",
      [](const F64Array& s, const F64Array& target, double alpha, double beta, double gamma) {
        if (s.size() != target.size()) throw py::value_error("saliency and mask sizes differ");
        LossConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.gamma = gamma;
        cfg.validate();
        const auto r = relevance_loss(span_of(s), span_of(target), cfg);
        py::dict out;
        out["mae"] = r.mae;
        out["mse"] = r.mse;
        out["focal"] = r.focal;
        out["value"] = r.value;
        out["gradient"] = r.gradient;
        return out;
      },
      py::arg("saliency"), py::arg("mask"), py::arg("alpha") = 0.5, py::arg("beta") = 1.0,
      py::arg("gamma") = 2.0);
  m.def("bce", [](double logit, int y) {
    const auto r = bce(logit, y);
    return py::make_tuple(r.value, r.gradient);
  }, py::arg("logit"), py::arg("label"));
  m.def("classification_loss", [](const std::vector<double>& logits, std::size_t y) {
    const auto r = classification_loss(logits, y);
    return py::make_tuple(r.value, r.gradient);
  }, py::arg("logits"), py::arg("label"));

  m.def("roc_auc", [](const F64Array& scores, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(scores.size()) != labels.size()) throw py::value_error("length mismatch");
    return roc_auc(span_of(scores), labels);
  }, py::arg("scores"), py::arg("labels"));
  m.def(
      "metrics",
      [](const std::vector<std::size_t>& preds, const std::vector<std::size_t>& truth,
         const std::vector<std::vector<double>>& scores, std::size_t classes) {
        const auto r = metrics(preds, truth, scores, classes);
        py::dict out;
        out["confusion"] = r.confusion;
        out["accuracy"] = r.accuracy;
        out["sensitivity"] = r.sensitivity;
        out["specificity"] = r.specificity;
        out["macro_precision"] = r.macro_precision;
        out["macro_recall"] = r.macro_recall;
        out["macro_f1"] = r.macro_f1;
        out["auc"] = r.auc;
        return out;
      },
      py::arg("preds"), py::arg("truth"), py::arg("scores") = std::vector<std::vector<double>>{},
      py::arg("classes") = 2);
  m.def("perturb", [](const U8Array& a, const std::string& spec) {
    return image_to_array(perturb(image_from_array(a), parse_perturb_spec(spec)));
  }, py::arg("image"), py::arg("spec"));
  m.def("saliency_alignment", [](const F64Array& s, const F64Array& mask) {
    return saliency_alignment(grid_from_array(s), grid_from_array(mask));
  }, py::arg("saliency"), py::arg("mask"));

  py::class_<Network>(m, "Network")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def_static("init", [](std::size_t classes, std::size_t image_size, std::size_t channels, std::uint64_t seed) {
        return init_network<float>(default_arch(classes, image_size, channels), seed);
      }, py::arg("classes"), py::arg("image_size") = 64, py::arg("channels") = 3, py::arg("seed") = 0)
      .def("save", [](const Network& n, const std::filesystem::path& p) { save_checkpoint(n, p); }, py::arg("path"))
      .def_property_readonly("architecture", [](const Network& n) { return n.arch.to_text(); })
      .def_property_readonly("parameter_count", &Network::parameter_count)
      .def_property_readonly("target_layer", [](const Network& n) { return n.arch.target_layer; })
      .def(
          "predict",
          [](const Network& n, const std::vector<U8Array>& images, const std::string& preprocess_mode) {
            const auto mode = parse_preprocess_mode(preprocess_mode);
            std::vector<Tensor<float>> inputs;
            for (const auto& a : images) inputs.push_back(preprocess(image_from_array(a), mode));
            std::vector<std::vector<double>> logits;
            {
              py::gil_scoped_release release;
              logits = predict_logits(n, inputs);
            }
            return rows_to_array(logits);
          },
          py::arg("images"), py::arg("preprocess") = "unit", "Eval-mode logits, one row per image.")
      .def(
          "gradcam",
          [](const Network& n, const U8Array& a, std::size_t class_idx, const std::string& preprocess_mode,
             std::string layer) {
            if (layer.empty()) layer = n.arch.target_layer;
            const auto input = preprocess(image_from_array(a), parse_preprocess_mode(preprocess_mode));
            return grid_to_array(gradcam(n, input, class_idx, layer).map.values);
          },
          py::arg("image"), py::arg("class_index"), py::arg("preprocess") = "unit", py::arg("layer") = "",
          "Grad-CAM map in [0,1] at the target layer resolution.");

  m.def(
      "generate_bias_dataset",
      [](const std::filesystem::path& dir, std::size_t image_size, std::size_t n_train, std::size_t n_test,
         std::uint64_t seed) {
        GenSpec spec;
        spec.image_size = image_size;
        spec.n_train = n_train;
        spec.n_test = n_test;
        spec.validate();
        write_bias_dataset(generate_bias_dataset(spec, seed), dir);
      },
      py::arg("directory"), py::arg("image_size") = 64, py::arg("n_train") = 400, py::arg("n_test") = 200,
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "gfsr");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        py::gil_scoped_release release;
        return run(static_cast<int>(args.size()), argv.data());
      },
      py::arg("args"), "Runs the command-line tool in-process and returns its exit code.");
}
