#include "gfsr/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "gfsr/annotation.hpp"
#include "gfsr/checkpoint.hpp"
#include "gfsr/concepts.hpp"
#include "gfsr/config.hpp"
#include "gfsr/dataset.hpp"
#include "gfsr/error.hpp"
#include "gfsr/evaluate.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/parallel.hpp"
#include "gfsr/pipeline.hpp"
#include "gfsr/rng.hpp"
#include "gfsr/saliency.hpp"
#include "gfsr/synth.hpp"
#include "gfsr/tensor_io.hpp"
#include "gfsr/trainer.hpp"

namespace fs = std::filesystem;

namespace gfsr {

namespace {

constexpr const char* kStages[][2] = {
    {"gen-data", "generate the synthetic shortcut dataset under <workdir>/data"},
    {"segment", "SLIC superpixels for every manifest image"},
    {"annotate-prep", "segment overlays and the annotation list for the annotated images"},
    {"embed", "pretrain the embedder and extract per-segment embeddings"},
    {"concepts", "cluster embeddings into concepts and score them from the annotations"},
    {"masks", "propagate concept scores into relevance masks"},
    {"train", "train the classifier (guided by the masks unless train.guided = false)"},
    {"gradcam", "Grad-CAM heatmaps for test images"},
    {"eval", "classification metrics and saliency alignment on the test split"},
    {"robust", "prediction agreement under the configured perturbations"},
    {"report", "aggregate metrics, robustness and alignment into one summary"},
};

class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& workdir) : path_(workdir / ".gfsr.lock") {
    fs::create_directories(workdir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) fail_data("workdir is locked by another run (" + path_.string() + "); remove it if stale");
      fail_data("cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
  }
  ~WorkdirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines_of(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

struct Stage {
  RunConfig cfg;
  Dataset data;
  std::vector<std::string> stems;

  fs::path dir(std::string_view name) const { return cfg.workdir / name; }

  void load_dataset() {
    data = load_manifest(cfg.manifest_path());
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < data.entries.size(); ++i) {
      const auto stem = data.entries[i].path.stem().string();
      if (auto [it, fresh] = seen.emplace(stem, i); !fresh) {
        fail_data("manifest: images " + data.entries[it->second].path.string() + " and " +
                  data.entries[i].path.string() + " share the file stem '" + stem + "'");
      }
      stems.push_back(stem);
    }
  }

  std::vector<std::size_t> split(std::string_view name) const {
    auto idx = data.split_indices(name);
    if (idx.empty()) fail_data("manifest has no '" + std::string(name) + "' images");
    return idx;
  }

  std::vector<std::size_t> all() const {
    std::vector<std::size_t> idx(data.entries.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }

  std::vector<Image> images(const std::vector<std::size_t>& idx) const {
    std::vector<Image> out;
    for (auto i : idx) {
      out.push_back(load_image(data.resolve(data.entries[i])));
      if (out.back().height != out.front().height || out.back().width != out.front().width) {
        fail_data(data.entries[i].path.string() + ": image size differs from the rest of the dataset");
      }
    }
    return out;
  }

  std::vector<Tensor<float>> inputs(const std::vector<Image>& imgs) const {
    std::vector<Tensor<float>> out;
    for (const auto& img : imgs) out.push_back(preprocess(img, cfg.preprocess));
    return out;
  }

  std::vector<std::size_t> labels(const std::vector<std::size_t>& idx) const {
    std::vector<std::size_t> out;
    for (auto i : idx) out.push_back(static_cast<std::size_t>(data.entries[i].label));
    return out;
  }

  fs::path seg_path(std::size_t i) const { return dir("segments") / (stems[i] + ".seg"); }
  fs::path emb_path(std::size_t i) const { return dir("embed") / (stems[i] + ".emb"); }
  fs::path mask_path(std::size_t i) const { return dir("masks") / (stems[i] + ".mask"); }
  fs::path model_path() const { return dir("train") / "model.ckpt"; }

  std::vector<SegmentMap> segments(const std::vector<std::size_t>& idx) const {
    std::vector<SegmentMap> out;
    for (auto i : idx) {
      if (!fs::exists(seg_path(i))) fail_data("missing segment map " + seg_path(i).string() + " (run segment)");
      out.push_back(load_segment_map(seg_path(i).string()));
    }
    return out;
  }

  EmbeddingSet embedding(std::size_t i) const {
    if (!fs::exists(emb_path(i))) fail_data("missing embeddings " + emb_path(i).string() + " (run embed)");
    const auto t = decode_tensor<double>(read_file(emb_path(i)));
    if (t.rank() != 2) fail_data(emb_path(i).string() + ": embeddings must be rank 2");
    EmbeddingSet e;
    e.dim = t.dim(1);
    for (std::size_t s = 0; s < t.dim(0); ++s) {
      const auto row = t.slice0(s);
      e.vectors.emplace_back(row.begin(), row.end());
    }
    return e;
  }

  Grid<double> mask(std::size_t i) const {
    if (!fs::exists(mask_path(i))) fail_data("missing relevance mask " + mask_path(i).string() + " (run masks)");
    return load_mask(mask_path(i));
  }

  ArchSpec arch(const Image& sample) const {
    return default_arch(data.class_count, sample.height, 3);
  }

  Network model(const Image& sample) const {
    if (!fs::exists(model_path())) fail_data("missing checkpoint " + model_path().string() + " (run train)");
    auto net = load_checkpoint(model_path(), arch(sample));
    return net;
  }
};

void print(const std::string& s) { std::cout << s << "\n"; }

// --- stages -------------------------------------------------------------

void stage_gen_data(Stage& st) {
  const auto data = generate_bias_dataset(st.cfg.gen, derive_seed(st.cfg.seed, kSeedGen));
  const auto ds = write_bias_dataset(data, st.dir("data"));
  std::size_t glyphs = 0;
  for (const auto& s : data.samples) glyphs += s.glyph;
  print("gen-data: wrote " + std::to_string(ds.entries.size()) + " images (" + std::to_string(glyphs) +
        " with marker) to " + st.dir("data").string());
}

void stage_segment(Stage& st) {
  st.load_dataset();
  const auto idx = st.all();
  const auto imgs = st.images(idx);
  const auto segs = segment_images(imgs, st.cfg.slic);
  std::size_t total = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    save_segment_map(segs[j], st.seg_path(idx[j]).string(),
                     (st.dir("segments") / (st.stems[idx[j]] + ".csv")).string());
    total += segs[j].n_segments;
  }
  print("segment: " + std::to_string(idx.size()) + " images, " +
        fmt("%.1f", static_cast<double>(total) / static_cast<double>(idx.size())) + " segments per image");
}

// Annotated images: the first `per_class` training images of each class.
std::vector<std::size_t> annotated_images(const Stage& st) {
  std::vector<std::size_t> out;
  std::map<int, std::size_t> taken;
  for (auto i : st.split("train")) {
    auto& n = taken[st.data.entries[i].label];
    if (n < st.cfg.annotate_per_class) {
      ++n;
      out.push_back(i);
    }
  }
  return out;
}

// Generated datasets come with foreground masks that stand in for manual
// annotation; keyed by normalised image path.
std::map<std::string, fs::path> generated_masks(const Stage& st) {
  std::map<std::string, fs::path> generated;
  const auto markers_csv = st.cfg.manifest_path().parent_path() / "markers.csv";
  if (fs::exists(markers_csv)) {
    for (const auto& m : load_markers(markers_csv.parent_path())) {
      generated[fs::path(m.image).lexically_normal().string()] = m.mask;
    }
  }
  return generated;
}

void stage_annotate_prep(Stage& st) {
  st.load_dataset();
  const auto idx = annotated_images(st);
  const auto imgs = st.images(idx);
  const auto segs = st.segments(idx);
  const auto generated = generated_masks(st);

  const auto out_dir = st.dir("annotate");
  const auto list_dir = st.cfg.annotations_path().parent_path();
  std::string table = "path,annotation\n";
  std::size_t auto_count = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& e = st.data.entries[idx[j]];
    const auto overlay = segment_overlay(imgs[j], segs[j]);
    save_image(overlay.image, out_dir / (st.stems[idx[j]] + "_segments.ppm"));
    write_file_atomic(out_dir / (st.stems[idx[j]] + "_segments.csv"), overlay.centroid_table);

    fs::path annotation;
    const auto key = st.data.resolve(e).lexically_normal().string();
    if (auto it = generated.find(key); it != generated.end()) {
      annotation = it->second;
      ++auto_count;
    } else {
      annotation = out_dir / (st.stems[idx[j]] + ".ids");
      if (!fs::exists(annotation)) write_file_atomic(annotation, "");
    }
    table += e.path.generic_string() + "," + fs::proximate(annotation, list_dir).generic_string() + "\n";
  }
  write_file_atomic(st.cfg.annotations_path(), table);
  print("annotate-prep: " + std::to_string(idx.size()) + " images listed in " + st.cfg.annotations_path().string() +
        " (" + std::to_string(auto_count) + " pre-filled from generator masks)");
}

void save_embeddings(const EmbeddingSet& e, const fs::path& path) {
  Tensor<double> t({e.vectors.size(), e.dim});
  for (std::size_t s = 0; s < e.vectors.size(); ++s) {
    std::copy(e.vectors[s].begin(), e.vectors[s].end(), t.data() + s * e.dim);
  }
  write_file_atomic(path, encode_tensor(t));
}

void stage_embed(Stage& st) {
  st.load_dataset();
  const auto idx = st.all();
  const auto imgs = st.images(idx);
  const auto segs = st.segments(idx);
  std::vector<EmbeddingSet> emb;
  if (st.cfg.fallback_embedder) {
    emb = fallback_embeddings(imgs, segs);
  } else {
    const auto arch = st.arch(imgs.front());
    const auto inputs = st.inputs(imgs);
    TrainingSet pre;
    for (auto i : st.split("train")) {
      pre.inputs.push_back(inputs[i]);
      pre.labels.push_back(static_cast<std::size_t>(st.data.entries[i].label));
    }
    TrainConfig cfg = st.cfg.train;
    cfg.guided = false;
    cfg.epochs = st.cfg.pretrain_epochs;
    cfg.seed = derive_seed(st.cfg.seed, kSeedPretrain);
    const auto net = train(init_network<float>(arch, derive_seed(st.cfg.seed, kSeedInit)), pre, cfg).net;
    save_checkpoint(net, st.dir("embed") / "embedder.ckpt");
    emb = network_embeddings(net, inputs, segs, arch.embed_layer);
  }
  for (std::size_t j = 0; j < idx.size(); ++j) save_embeddings(emb[j], st.emb_path(idx[j]));
  print("embed: " + std::to_string(idx.size()) + " images, " + std::to_string(emb.front().dim) + "-d embeddings (" +
        (st.cfg.fallback_embedder ? "fallback" : "network") + " embedder)");
}

void stage_concepts(Stage& st) {
  st.load_dataset();
  std::map<std::string, std::size_t> by_path;
  for (std::size_t i = 0; i < st.data.entries.size(); ++i) {
    by_path[st.data.entries[i].path.lexically_normal().generic_string()] = i;
  }
  const auto list_path = st.cfg.annotations_path();
  auto train_idx = st.split("train");
  std::vector<std::size_t> members = train_idx;
  std::map<std::size_t, std::size_t> position;
  for (std::size_t j = 0; j < members.size(); ++j) position[members[j]] = j;

  std::vector<std::pair<std::size_t, fs::path>> listed;
  std::vector<std::string> rows;
  if (fs::exists(list_path)) {
    rows = lines_of(read_file(list_path));
    if (rows.empty() || rows.front() != "path,annotation") {
      fail_data(list_path.string() + ": expected header 'path,annotation'");
    }
  } else {
    // No list: fall back to the generator's masks for the images annotate-prep would pick.
    const auto generated = generated_masks(st);
    if (generated.empty()) fail_data("missing annotation list " + list_path.string() + " (run annotate-prep)");
    for (auto i : annotated_images(st)) {
      const auto it = generated.find(st.data.resolve(st.data.entries[i]).lexically_normal().string());
      if (it == generated.end()) fail_data("no generator mask for " + st.data.entries[i].path.string());
      listed.emplace_back(i, it->second);
    }
    print("concepts: no annotation list, using generator masks for " + std::to_string(listed.size()) + " images");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cols = split_csv(rows[r]);
    if (cols.size() != 2) fail_data(list_path.string() + ":" + std::to_string(r + 1) + ": expected 2 columns");
    const auto it = by_path.find(fs::path(cols[0]).lexically_normal().generic_string());
    if (it == by_path.end()) {
      fail_data(list_path.string() + ":" + std::to_string(r + 1) + ": image '" + cols[0] + "' is not in the manifest");
    }
    fs::path ann = cols[1];
    if (ann.is_relative()) ann = list_path.parent_path() / ann;
    listed.emplace_back(it->second, ann);
    if (!position.count(it->second)) {
      position[it->second] = members.size();
      members.push_back(it->second);
    }
  }
  if (listed.empty()) fail_data(list_path.string() + ": no annotated images");

  std::vector<EmbeddingSet> emb;
  for (auto i : members) emb.push_back(st.embedding(i));
  std::vector<Annotation> annotations;
  std::size_t annotated_segments = 0;
  for (const auto& [i, ann] : listed) {
    const auto seg = st.segments({i}).front();
    auto ids = load_annotation(ann, seg, st.cfg.overlap);
    annotated_segments += ids.size();
    annotations.push_back({position[i], std::move(ids)});
  }
  const auto found = discover_concepts(emb, annotations, st.cfg.concepts_k, derive_seed(st.cfg.seed, kSeedConcepts),
                                       st.cfg.concept_source);
  const auto& model = found.fit.model;
  std::vector<std::size_t> counts(model.k(), 0);
  for (auto c : found.annotated_concepts) ++counts[c];
  std::vector<std::size_t> members_per(model.k(), 0);
  for (auto l : found.fit.labels) ++members_per[l];

  std::string summary = "concept,score,annotated_segments,fitted_segments\n";
  for (std::size_t c = 0; c < model.k(); ++c) {
    summary += std::to_string(c) + "," + fmt("%.6f", model.scores[c]) + "," + std::to_string(counts[c]) + "," +
               std::to_string(members_per[c]) + "\n";
  }
  save_concept_model(model, st.dir("concepts") / "model.bin");
  write_file_atomic(st.dir("concepts") / "summary.csv", summary);
  print("concepts: k=" + std::to_string(model.k()) + " from " + std::to_string(found.fit.labels.size()) +
        " segments; " + std::to_string(annotated_segments) + " annotated segments in " +
        std::to_string(listed.size()) + " images");
}

void stage_masks(Stage& st) {
  st.load_dataset();
  const auto model_path = st.dir("concepts") / "model.bin";
  if (!fs::exists(model_path)) fail_data("missing concept model " + model_path.string() + " (run concepts)");
  const auto model = load_concept_model(model_path);
  const auto idx = st.all();
  const auto segs = st.segments(idx);
  std::vector<EmbeddingSet> emb;
  for (auto i : idx) emb.push_back(st.embedding(i));
  const auto masks = relevance_masks(emb, segs, model);
  double mean = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    save_mask(masks[j], st.mask_path(idx[j]));
    for (double v : masks[j].values) mean += v;
  }
  double pixels = 0;
  for (const auto& m : masks) pixels += static_cast<double>(m.size());
  print("masks: " + std::to_string(idx.size()) + " relevance masks, mean value " + fmt("%.4f", mean / pixels));
}

void stage_train(Stage& st) {
  st.load_dataset();
  const auto idx = st.split("train");
  const auto imgs = st.images(idx);
  const auto cfg = st.cfg.train_config();
  TrainingSet set;
  set.inputs = st.inputs(imgs);
  set.labels = st.labels(idx);
  if (cfg.guided) {
    for (auto i : idx) set.masks.push_back(st.mask(i));
  }
  const auto arch = st.arch(imgs.front());
  const auto result = train(init_network<float>(arch, derive_seed(st.cfg.seed, kSeedInit)), set, cfg,
                            [&](const EpochStats& e) {
                              if (e.epoch % 50 == 0 || e.epoch == cfg.epochs || e.epoch == 1) {
                                std::fprintf(stderr, "train: epoch %zu/%zu l_total %.5f train_acc %.4f\n", e.epoch,
                                             cfg.epochs, e.loss.l_total, e.train_acc);
                              }
                            });
  save_checkpoint(result.net, st.model_path());
  write_file_atomic(st.dir("train") / "history.csv", format_history(result.history));
  print(std::string("train: ") + (cfg.guided ? "guided" : "baseline") + ", " + std::to_string(cfg.epochs) +
        " epochs on " + std::to_string(idx.size()) + " images -> " + st.model_path().string());
}

std::vector<std::size_t> explain_classes(const Network& net, std::span<const Tensor<float>> inputs,
                                         std::span<const std::size_t> truth, SaliencyClass which) {
  if (which == SaliencyClass::true_label) return {truth.begin(), truth.end()};
  std::vector<std::size_t> out;
  for (const auto& l : predict_logits(net, inputs)) out.push_back(argmax(l));
  return out;
}

void stage_gradcam(Stage& st) {
  st.load_dataset();
  auto idx = st.split("test");
  if (idx.size() > st.cfg.gradcam_count) idx.resize(st.cfg.gradcam_count);
  const auto imgs = st.images(idx);
  const auto net = st.model(imgs.front());
  const auto inputs = st.inputs(imgs);
  const auto truth = st.labels(idx);
  const auto classes = explain_classes(net, inputs, truth, st.cfg.gradcam_class);
  std::string table = "path,label,class,peak_row,peak_col\n";
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto cam = gradcam(net, inputs[j], classes[j], net.arch.target_layer);
    const auto& v = cam.map.values;
    const auto peak = static_cast<std::size_t>(std::max_element(v.values.begin(), v.values.end()) - v.values.begin());
    write_heatmap(v, imgs[j], st.dir("gradcam") / (st.stems[idx[j]] + ".ppm"));
    Tensor<float> raw({v.rows, v.cols});
    for (std::size_t i = 0; i < v.size(); ++i) raw[i] = static_cast<float>(v.values[i]);
    save_tensor_file(raw, (st.dir("gradcam") / (st.stems[idx[j]] + ".cam")).string());
    table += st.data.entries[idx[j]].path.generic_string() + "," + std::to_string(truth[j]) + "," +
             std::to_string(classes[j]) + "," + std::to_string(peak / v.cols) + "," + std::to_string(peak % v.cols) +
             "\n";
  }
  write_file_atomic(st.dir("gradcam") / "summary.csv", table);
  print("gradcam: " + std::to_string(idx.size()) + " heatmaps in " + st.dir("gradcam").string());
}

void stage_eval(Stage& st) {
  st.load_dataset();
  const auto idx = st.split("test");
  const auto imgs = st.images(idx);
  const auto net = st.model(imgs.front());
  const auto inputs = st.inputs(imgs);
  const auto truth = st.labels(idx);
  std::vector<Grid<double>> masks;
  for (auto i : idx) masks.push_back(st.mask(i));

  const auto logits = predict_logits(net, inputs);
  std::vector<std::size_t> preds;
  std::vector<std::vector<double>> scores;
  std::string table = "path,label,predicted";
  for (std::size_t c = 0; c < st.data.class_count; ++c) table += ",prob_" + std::to_string(c);
  table += "\n";
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& z = logits[j];
    const double top = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double total = 0;
    for (std::size_t c = 0; c < z.size(); ++c) total += p[c] = std::exp(z[c] - top);
    for (auto& v : p) v /= total;
    preds.push_back(argmax(z));
    table += st.data.entries[idx[j]].path.generic_string() + "," + std::to_string(truth[j]) + "," +
             std::to_string(preds.back());
    for (double v : p) table += "," + fmt("%.6f", v);
    table += "\n";
    scores.push_back(std::move(p));
  }
  const auto report = metrics(preds, truth, scores, st.data.class_count);

  const auto classes = explain_classes(net, inputs, truth, st.cfg.gradcam_class);
  const auto shape = net.arch.output_shapes().at(net.arch.layer_index(net.arch.target_layer));
  std::string align_table = "path,class,alignment\n";
  double mean_align = 0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto cam = gradcam(net, inputs[j], classes[j], net.arch.target_layer);
    const double a = saliency_alignment(cam.map.values, pool_mask(masks[j], shape[1], shape[2]));
    mean_align += a;
    align_table += st.data.entries[idx[j]].path.generic_string() + "," + std::to_string(classes[j]) + "," +
                   fmt("%.6f", a) + "\n";
  }
  mean_align /= static_cast<double>(idx.size());

  write_file_atomic(st.dir("eval") / "predictions.csv", table);
  write_file_atomic(st.dir("eval") / "metrics.csv", format_metrics(report));
  write_file_atomic(st.dir("eval") / "alignment.csv", align_table);
  print("eval: accuracy " + fmt("%.4f", report.accuracy) + ", AUC " + fmt("%.4f", report.auc) +
        ", mean saliency alignment " + fmt("%.4f", mean_align) + " on " + std::to_string(idx.size()) +
        " test images");
}

void stage_robust(Stage& st) {
  st.load_dataset();
  if (st.cfg.perturbations.empty()) fail_usage("robust: no perturbations configured (robust.perturb)");
  const auto idx = st.split("test");
  const auto imgs = st.images(idx);
  const auto net = st.model(imgs.front());
  std::string summary = "index,perturbation,samples,agreement_rate,flip_rate\n";
  std::vector<std::pair<fs::path, std::string>> outputs;
  for (std::size_t p = 0; p < st.cfg.perturbations.size(); ++p) {
    const auto& spec = st.cfg.perturbations[p];
    const auto r = robustness(net, imgs, spec, st.cfg.preprocess);
    summary += std::to_string(p) + ",\"" + spec.describe() + "\"," + std::to_string(r.samples) + "," +
               fmt("%.6f", r.agreement) + "," + fmt("%.6f", r.flip) + "\n";
    outputs.emplace_back(st.dir("robust") / ("perturbation_" + std::to_string(p) + ".csv"),
                         "# " + spec.describe() + "\n" + format_robustness(r));
    print("robust: " + spec.describe() + " agreement " + fmt("%.4f", r.agreement) + ", flip " + fmt("%.4f", r.flip));
  }
  for (const auto& [path, text] : outputs) write_file_atomic(path, text);
  write_file_atomic(st.dir("robust") / "summary.csv", summary);
}

std::map<std::string, std::string> read_metric_table(const fs::path& path) {
  if (!fs::exists(path)) fail_data("missing " + path.string());
  std::map<std::string, std::string> out;
  for (const auto& line : lines_of(read_file(path))) {
    const auto cols = split_csv(line);
    if (cols.size() == 2) out[cols[0]] = cols[1];
  }
  return out;
}

void stage_report(Stage& st) {
  const auto metric = read_metric_table(st.dir("eval") / "metrics.csv");
  const auto align_path = st.dir("eval") / "alignment.csv";
  const auto robust_path = st.dir("robust") / "summary.csv";
  const auto history_path = st.dir("train") / "history.csv";
  for (const auto& p : {align_path, robust_path, history_path}) {
    if (!fs::exists(p)) fail_data("missing " + p.string());
  }
  double align = 0;
  std::size_t n_align = 0;
  const auto align_rows = lines_of(read_file(align_path));
  for (std::size_t r = 1; r < align_rows.size(); ++r) {
    align += std::stod(split_csv(align_rows[r]).back());
    ++n_align;
  }
  if (n_align) align /= static_cast<double>(n_align);
  const auto history = lines_of(read_file(history_path));
  const auto robust_rows = lines_of(read_file(robust_path));

  std::string csv = "section,key,value\n";
  std::string text = "GFSR run report\n===============\n\nClassification (test split)\n";
  for (const char* key : {"accuracy", "sensitivity", "specificity", "macro_precision", "macro_recall", "macro_f1", "auc"}) {
    const auto it = metric.find(key);
    if (it == metric.end()) fail_data("metrics.csv lacks '" + std::string(key) + "'");
    csv += std::string("metrics,") + key + "," + it->second + "\n";
    char line[128];
    std::snprintf(line, sizeof line, "  %-16s %s\n", key, it->second.c_str());
    text += line;
  }
  text += "\nSaliency alignment\n  mean             " + fmt("%.6f", align) + " over " + std::to_string(n_align) +
          " images\n";
  csv += "alignment,mean," + fmt("%.6f", align) + "\n";
  text += "\nRobustness\n";
  for (std::size_t r = 1; r < robust_rows.size(); ++r) {
    const auto cols = split_csv(robust_rows[r]);
    if (cols.size() < 5) fail_data(robust_path.string() + ": malformed row");
    const auto& row = robust_rows[r];
    const auto open = row.find('"'), close = row.rfind('"');
    const auto name = open < close ? row.substr(open + 1, close - open - 1) : cols[1];
    const auto& agree = cols[cols.size() - 2];
    const auto& flip = cols.back();
    text += "  " + name + "  agreement " + agree + "  flip " + flip + "\n";
    csv += "robustness,agreement_" + cols[0] + "," + agree + "\n";
    csv += "robustness,flip_" + cols[0] + "," + flip + "\n";
  }
  if (history.size() > 1) {
    const auto last = split_csv(history.back());
    text += "\nTraining\n  epochs           " + last.front() + "\n  final l_total    " + last.at(6) +
            "\n  final train_acc  " + last.back() + "\n";
    csv += "training,epochs," + last.front() + "\n";
    csv += "training,train_acc," + last.back() + "\n";
  }
  write_file_atomic(st.dir("report") / "report.txt", text);
  write_file_atomic(st.dir("report") / "summary.csv", csv);
  std::cout << text;
}

using StageFn = void (*)(Stage&);

const std::map<std::string, StageFn>& stage_table() {
  static const std::map<std::string, StageFn> table = {
      {"gen-data", stage_gen_data}, {"segment", stage_segment}, {"annotate-prep", stage_annotate_prep},
      {"embed", stage_embed},       {"concepts", stage_concepts}, {"masks", stage_masks},
      {"train", stage_train},       {"gradcam", stage_gradcam}, {"eval", stage_eval},
      {"robust", stage_robust},     {"report", stage_report},
  };
  return table;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::usage: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::numerical: return 3;
  }
  return 2;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Concept-guided saliency training pipeline", "gfsr"};
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::string config_path, workdir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Config file of 'key = value' lines");
  app.add_option("--seed", seed, "Global seed (overrides the config)");
  app.add_option("--workdir", workdir, "Directory for every artifact (overrides the config)");
  app.require_subcommand(1, 1);
  for (const auto& [name, help] : kStages) app.add_subcommand(name, help)->fallthrough();
  app.footer("Environment: GFSR_THREADS caps worker threads.\nConfig keys (with defaults):\n" + config_reference());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    Stage st;
    st.cfg = config_path.empty() ? parse_config_text("") : parse_config(config_path);
    if (seed) st.cfg.seed = *seed;
    if (!workdir.empty()) st.cfg.workdir = workdir;
    WorkdirLock lock(st.cfg.workdir);
    stage_table().at(name)(st);
    return 0;
  } catch (const Error& e) {
    std::cerr << "gfsr " << name << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "gfsr " << name << ": " << e.what() << "\n";
    return 2;
  }
}

}  // namespace gfsr
