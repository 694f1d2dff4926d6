#include "gfsr/config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/rng.hpp"

namespace gfsr {

std::filesystem::path RunConfig::manifest_path() const {
  return manifest.empty() ? workdir / "data" / "manifest.csv" : manifest;
}

std::filesystem::path RunConfig::annotations_path() const {
  return annotations.empty() ? workdir / "annotate" / "annotations.csv" : annotations;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c = train;
  c.epochs = epochs ? *epochs : (c.guided ? kGuidedEpochs : kBaselineEpochs);
  c.seed = derive_seed(seed, kSeedTrain);
  return c;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Value {
  std::string text;
  std::string where;

  [[noreturn]] void bad(std::string_view expected) const {
    fail_usage(where + ": expected " + std::string(expected) + ", got '" + text + "'");
  }

  double real() const {
    double v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) bad("a number");
    return v;
  }
  std::uint64_t count() const {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) bad("a non-negative integer");
    return v;
  }
  bool flag() const {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    bad("true or false");
  }
  template <typename F>
  auto wrap(F&& f) const {
    try {
      return f(text);
    } catch (const Error& e) {
      fail_usage(where + ": " + e.what());
    }
  }
};

using Setter = std::function<void(RunConfig&, const Value&)>;

const std::map<std::string, std::pair<Setter, std::string>, std::less<>>& setters() {
  static const std::map<std::string, std::pair<Setter, std::string>, std::less<>> table = {
      {"seed", {[](RunConfig& c, const Value& v) { c.seed = v.count(); }, "0"}},
      {"workdir", {[](RunConfig& c, const Value& v) { c.workdir = v.text; }, "work"}},
      {"data.manifest", {[](RunConfig& c, const Value& v) { c.manifest = v.text; }, "<workdir>/data/manifest.csv"}},
      {"data.annotations",
       {[](RunConfig& c, const Value& v) { c.annotations = v.text; }, "<workdir>/annotate/annotations.csv"}},
      {"data.preprocess",
       {[](RunConfig& c, const Value& v) { c.preprocess = v.wrap(parse_preprocess_mode); }, "unit"}},
      {"arch.name",
       {[](RunConfig& c, const Value& v) {
          if (v.text != "default") v.bad("'default'");
          c.arch = v.text;
        },
        "default"}},

      {"gen.image_size", {[](RunConfig& c, const Value& v) { c.gen.image_size = v.count(); }, "64"}},
      {"gen.n_train", {[](RunConfig& c, const Value& v) { c.gen.n_train = v.count(); }, "400"}},
      {"gen.n_test", {[](RunConfig& c, const Value& v) { c.gen.n_test = v.count(); }, "200"}},
      {"gen.marker_corr_train", {[](RunConfig& c, const Value& v) { c.gen.marker_corr_train = v.real(); }, "1.0"}},
      {"gen.marker_corr_test", {[](RunConfig& c, const Value& v) { c.gen.marker_corr_test = v.real(); }, "0.5"}},
      {"gen.blob_contrast", {[](RunConfig& c, const Value& v) { c.gen.blob_contrast = v.real(); }, "40"}},
      {"gen.blob_radius_min", {[](RunConfig& c, const Value& v) { c.gen.blob_radius_min = v.real(); }, "5"}},
      {"gen.blob_radius_max", {[](RunConfig& c, const Value& v) { c.gen.blob_radius_max = v.real(); }, "9"}},
      {"gen.background_level", {[](RunConfig& c, const Value& v) { c.gen.background_level = v.real(); }, "100"}},
      {"gen.noise_sigma", {[](RunConfig& c, const Value& v) { c.gen.noise_sigma = v.real(); }, "20"}},
      {"gen.background",
       {[](RunConfig& c, const Value& v) { c.gen.background = v.wrap(parse_background_mode); }, "noise"}},
      {"gen.glyph_offset", {[](RunConfig& c, const Value& v) { c.gen.glyph_offset = v.count(); }, "2"}},
      {"gen.glyph_size", {[](RunConfig& c, const Value& v) { c.gen.glyph_size = v.count(); }, "6"}},
      {"gen.glyph_value",
       {[](RunConfig& c, const Value& v) {
          const auto x = v.count();
          if (x > 255) v.bad("a value <= 255");
          c.gen.glyph_value = static_cast<std::uint8_t>(x);
        },
        "255"}},

      {"slic.k", {[](RunConfig& c, const Value& v) { c.slic.k = v.count(); }, "50"}},
      {"slic.compactness", {[](RunConfig& c, const Value& v) { c.slic.compactness = v.real(); }, "10.0"}},
      {"slic.max_iter", {[](RunConfig& c, const Value& v) { c.slic.max_iter = v.count(); }, "10"}},

      {"annotate.per_class", {[](RunConfig& c, const Value& v) { c.annotate_per_class = v.count(); }, "5"}},
      {"annotate.overlap", {[](RunConfig& c, const Value& v) { c.overlap = v.real(); }, "0.25"}},

      {"concepts.k", {[](RunConfig& c, const Value& v) { c.concepts_k = v.count(); }, "7"}},
      {"concepts.fit_on",
       {[](RunConfig& c, const Value& v) { c.concept_source = v.wrap(parse_concept_source); }, "training"}},
      {"concepts.embedder",
       {[](RunConfig& c, const Value& v) {
          if (v.text == "network") c.fallback_embedder = false;
          else if (v.text == "fallback") c.fallback_embedder = true;
          else v.bad("network or fallback");
        },
        "network"}},
      {"concepts.pretrain_epochs", {[](RunConfig& c, const Value& v) { c.pretrain_epochs = v.count(); }, "20"}},

      {"loss.alpha", {[](RunConfig& c, const Value& v) { c.train.loss.alpha = v.real(); }, "0.5"}},
      {"loss.beta", {[](RunConfig& c, const Value& v) { c.train.loss.beta = v.real(); }, "1.0"}},
      {"loss.gamma", {[](RunConfig& c, const Value& v) { c.train.loss.gamma = v.real(); }, "2.0"}},
      {"loss.w_rel", {[](RunConfig& c, const Value& v) { c.train.loss.w_rel = v.real(); }, "1.0"}},

      {"train.epochs", {[](RunConfig& c, const Value& v) { c.epochs = v.count(); }, "800 guided / 300 baseline"}},
      {"train.batch_size", {[](RunConfig& c, const Value& v) { c.train.batch_size = v.count(); }, "16"}},
      {"train.lr", {[](RunConfig& c, const Value& v) { c.train.lr = v.real(); }, "0.001"}},
      {"train.beta1", {[](RunConfig& c, const Value& v) { c.train.beta1 = v.real(); }, "0.9"}},
      {"train.beta2", {[](RunConfig& c, const Value& v) { c.train.beta2 = v.real(); }, "0.999"}},
      {"train.epsilon", {[](RunConfig& c, const Value& v) { c.train.epsilon = v.real(); }, "1e-8"}},
      {"train.guided", {[](RunConfig& c, const Value& v) { c.train.guided = v.flag(); }, "true"}},
      {"train.saliency_class",
       {[](RunConfig& c, const Value& v) { c.train.saliency_class = v.wrap(parse_saliency_class); }, "true_label"}},

      {"gradcam.count", {[](RunConfig& c, const Value& v) { c.gradcam_count = v.count(); }, "8"}},
      {"gradcam.class",
       {[](RunConfig& c, const Value& v) { c.gradcam_class = v.wrap(parse_saliency_class); }, "true_label"}},

      {"robust.perturb",
       {[](RunConfig& c, const Value& v) {
          c.perturbations.clear();
          std::string_view rest = v.text;
          while (!rest.empty()) {
            const auto semi = rest.find(';');
            const auto item = trim(rest.substr(0, semi));
            if (!item.empty()) c.perturbations.push_back(v.wrap([&](const std::string&) { return parse_perturb_spec(item); }));
            rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
          }
        },
        "occlude:2,2,6,6,0"}},
  };
  return table;
}

void validate(const RunConfig& c) {
  try {
    c.gen.validate();
    c.slic.validate();
    c.train.validate();
  } catch (const Error& e) {
    fail_usage(std::string("config: ") + e.what());
  }
  if (c.concepts_k == 0) fail_usage("config: concepts.k must be >= 1");
  if (!(c.overlap >= 0 && c.overlap <= 1)) fail_usage("config: annotate.overlap must lie in [0,1]");
}

}  // namespace

RunConfig parse_config_text(std::string_view text, std::string_view origin) {
  RunConfig cfg;
  cfg.perturbations.push_back(parse_perturb_spec("occlude:2,2,6,6,0"));
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail_usage(where + ": expected 'key = value'");
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) fail_usage(where + ": missing key");
    const auto it = setters().find(key);
    if (it == setters().end()) fail_usage(where + ": unknown key '" + key + "'");
    if (auto [prev, fresh] = seen.emplace(key, line_no); !fresh) {
      fail_usage(where + ": key '" + key + "' already set on line " + std::to_string(prev->second));
    }
    if (value.empty()) fail_usage(where + ": missing value for '" + key + "'");
    it->second.first(cfg, Value{value, where});
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_file(path), path.string());
}

std::string config_reference() {
  std::string out;
  for (const auto& [key, entry] : setters()) out += "# " + key + " = " + entry.second + "\n";
  return out;
}

}  // namespace gfsr
