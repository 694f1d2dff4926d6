#include "gfsr/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/rng.hpp"
#include "gfsr/tensor_io.hpp"

namespace gfsr {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

std::size_t cell_of(double pixel_center, std::size_t full, std::size_t cells) {
  const auto c = static_cast<std::size_t>(std::floor(pixel_center * static_cast<double>(cells) /
                                                     static_cast<double>(full)));
  return std::min(c, cells - 1);
}

}  // namespace

EmbeddingSet extract_segment_embeddings(std::span<const double> feature, std::size_t channels,
                                        std::size_t rows, std::size_t cols, const SegmentMap& seg) {
  if (seg.n_segments == 0 || seg.labels.empty()) fail_data("embeddings: empty segment map");
  if (feature.size() != channels * rows * cols || rows == 0 || cols == 0) {
    fail_data("embeddings: feature size mismatch");
  }
  const std::size_t plane = rows * cols;
  EmbeddingSet out;
  out.dim = channels;
  out.vectors.assign(seg.n_segments,
                     std::vector<double>(channels, -std::numeric_limits<double>::infinity()));
  std::vector<bool> owned(seg.n_segments, false);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto pr = static_cast<std::size_t>((i + 0.5) * seg.rows / rows);
    for (std::size_t j = 0; j < cols; ++j) {
      const auto pc = static_cast<std::size_t>((j + 0.5) * seg.cols / cols);
      const auto s = static_cast<std::size_t>(seg.at(pr, pc));
      owned[s] = true;
      auto& v = out.vectors[s];
      for (std::size_t k = 0; k < channels; ++k) v[k] = std::max(v[k], feature[k * plane + i * cols + j]);
    }
  }
  for (std::size_t s = 0; s < seg.n_segments; ++s) {
    if (owned[s]) continue;
    const std::size_t i = cell_of(seg.centroids[s][0] + 0.5, seg.rows, rows);
    const std::size_t j = cell_of(seg.centroids[s][1] + 0.5, seg.cols, cols);
    for (std::size_t k = 0; k < channels; ++k) out.vectors[s][k] = feature[k * plane + i * cols + j];
  }
  return out;
}

EmbeddingSet fallback_embeddings(const Image& img, const SegmentMap& seg) {
  if (seg.n_segments == 0) fail_data("embeddings: empty segment map");
  if (img.height != seg.rows || img.width != seg.cols) fail_data("embeddings: image/segment size mismatch");
  const auto lab = rgb_to_lab(img);
  const auto edges = boundary_pixels(seg);
  EmbeddingSet out;
  out.dim = kFallbackEmbeddingDim;
  out.vectors.assign(seg.n_segments, std::vector<double>(kFallbackEmbeddingDim, 0.0));
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    auto& v = out.vectors[static_cast<std::size_t>(seg.labels[p])];
    const Lab& c = lab.values[p];
    v[0] += c.l / 100.0;
    v[1] += c.a / 100.0;
    v[2] += c.b / 100.0;
    const auto bin = std::min<std::size_t>(7, static_cast<std::size_t>(std::max(0.0, c.l) / 12.5));
    v[3 + bin] += 1.0;
    if (edges[p]) v[11] += 1.0;
  }
  for (std::size_t s = 0; s < seg.n_segments; ++s) {
    const double inv = 1.0 / static_cast<double>(seg.sizes[s]);
    for (auto& x : out.vectors[s]) x *= inv;
  }
  return out;
}

KMeansFit fit_concepts(const std::vector<std::vector<double>>& data, std::size_t k,
                       std::uint64_t seed) {
  if (data.empty()) fail_data("fit_concepts: no embeddings");
  if (k == 0) fail_data("fit_concepts: k must be >= 1");
  const std::size_t dim = data.front().size();
  for (const auto& v : data) {
    if (v.size() != dim) fail_data("fit_concepts: ragged embeddings");
    for (double x : v) {
      if (!std::isfinite(x)) fail_data("fit_concepts: non-finite embedding value");
    }
  }
  KMeansFit fit;
  fit.requested_k = k;

  auto sorted = data;
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < k) {
    std::fprintf(stderr, "warning: only %zu distinct embeddings; reducing k from %zu\n", distinct, k);
    k = distinct;
  }

  // Greedy k-means++ seeding: each step draws 2 + ln(k) D^2-weighted
  // candidates and keeps the one leaving the smallest potential.
  Rng rng(seed);
  auto& centroids = fit.model.centroids;
  centroids.push_back(data[rng.below(data.size())]);
  std::vector<double> nearest(data.size()), trial(data.size()), best_nearest;
  for (std::size_t i = 0; i < data.size(); ++i) nearest[i] = squared_distance(data[i], centroids[0]);
  const auto trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  while (centroids.size() < k) {
    double total = 0;
    for (double d : nearest) total += d;
    std::size_t chosen = 0;
    double chosen_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      const double target = rng.uniform() * total;
      std::size_t pick = data.size() - 1;
      double acc = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0) {
          pick = i;
          break;
        }
      }
      while (nearest[pick] == 0) --pick;  // rounding at the tail of the scan
      double potential = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        trial[i] = std::min(nearest[i], squared_distance(data[i], data[pick]));
        potential += trial[i];
      }
      if (potential < chosen_potential) {
        chosen_potential = potential;
        chosen = pick;
        best_nearest = trial;
      }
    }
    centroids.push_back(data[chosen]);
    nearest = best_nearest;
  }

  // Lloyd iterations.
  fit.labels.assign(data.size(), 0);
  std::vector<std::vector<double>> sums(k, std::vector<double>(dim));
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < 100; ++iter) {
    double inertia = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(data[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(data[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      fit.labels[i] = best;
      inertia += best_d;
    }
    fit.inertia.push_back(inertia);
    if (fit.inertia.size() >= 2) {
      const double prev = fit.inertia[fit.inertia.size() - 2];
      if (prev <= 0 || (prev - inertia) / prev < 1e-6) break;
    }
    for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto& s = sums[fit.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += data[i][j];
      ++counts[fit.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (!counts[c]) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return fit;
}

std::size_t assign_concept(std::span<const double> v, const ConceptModel& model) {
  if (model.k() == 0) fail_data("assign_concept: empty model");
  if (v.size() != model.dim()) {
    fail_data("assign_concept: vector has " + std::to_string(v.size()) + " dims, model " +
              std::to_string(model.dim()));
  }
  std::size_t best = 0;
  double best_d = squared_distance(v, model.centroids[0]);
  for (std::size_t c = 1; c < model.k(); ++c) {
    const double d = squared_distance(v, model.centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<double> score_concepts(std::span<const std::size_t> annotated, std::size_t k) {
  if (annotated.empty()) fail_data("score_concepts: no annotated segments");
  std::vector<double> raw(k, 0.0);
  for (auto c : annotated) {
    if (c >= k) fail_data("score_concepts: concept index out of range");
    raw[c] += 1.0;
  }
  const double total = static_cast<double>(annotated.size());
  for (auto& r : raw) r /= total;
  const double top = *std::max_element(raw.begin(), raw.end());
  for (auto& r : raw) r /= top;
  return raw;
}

Grid<double> build_relevance_mask(const SegmentMap& seg, std::span<const std::size_t> seg_concepts,
                                  const ConceptModel& model) {
  if (seg_concepts.size() != seg.n_segments) {
    fail_data("relevance mask: " + std::to_string(seg_concepts.size()) + " concept entries for " +
              std::to_string(seg.n_segments) + " segments");
  }
  if (model.scores.size() != model.k()) fail_data("relevance mask: concept model is not scored");
  Grid<double> mask(seg.rows, seg.cols);
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    const auto c = seg_concepts[static_cast<std::size_t>(seg.labels[p])];
    if (c >= model.k()) fail_data("relevance mask: concept index out of range");
    mask.values[p] = model.scores[c];
  }
  return mask;
}

Grid<double> pool_mask(const Grid<double>& mask, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) fail_data("pool_mask: zero target size");
  if (rows > mask.rows || cols > mask.cols) fail_data("pool_mask: target larger than mask");
  Grid<double> sum(rows, cols), count(rows, cols);
  for (std::size_t r = 0; r < mask.rows; ++r) {
    const std::size_t i = cell_of(r + 0.5, mask.rows, rows);
    for (std::size_t c = 0; c < mask.cols; ++c) {
      const std::size_t j = cell_of(c + 0.5, mask.cols, cols);
      sum.at(i, j) += mask.at(r, c);
      count.at(i, j) += 1.0;
    }
  }
  for (std::size_t p = 0; p < sum.size(); ++p) {
    sum.values[p] = count.values[p] > 0 ? sum.values[p] / count.values[p] : 0.0;
  }
  return sum;
}

void save_concept_model(const ConceptModel& model, const std::filesystem::path& path) {
  Tensor<double> centroids({model.k(), model.dim()});
  for (std::size_t c = 0; c < model.k(); ++c) {
    std::copy(model.centroids[c].begin(), model.centroids[c].end(), centroids.data() + c * model.dim());
  }
  Tensor<double> scores({model.scores.size()}, model.scores);
  write_file_atomic(path, "centroids\n" + encode_tensor(centroids) + "scores\n" + encode_tensor(scores));
}

ConceptModel load_concept_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto expect = [&](std::string_view name) {
    if (bytes.compare(pos, name.size() + 1, std::string(name) + "\n") != 0) {
      fail_data(path.string() + ": expected tensor '" + std::string(name) + "'");
    }
    pos += name.size() + 1;
  };
  expect("centroids");
  const auto centroids = decode_tensor_at<double>(bytes, pos);
  expect("scores");
  const auto scores = decode_tensor_at<double>(bytes, pos);
  if (centroids.rank() != 2 || scores.rank() != 1 || scores.dim(0) != centroids.dim(0)) {
    fail_data(path.string() + ": inconsistent concept model");
  }
  ConceptModel model;
  for (std::size_t c = 0; c < centroids.dim(0); ++c) {
    const auto row = centroids.slice0(c);
    model.centroids.emplace_back(row.begin(), row.end());
  }
  model.scores = scores.storage();
  return model;
}

void save_mask(const Grid<double>& mask, const std::filesystem::path& path) {
  Tensor<float> t({mask.rows, mask.cols});
  for (std::size_t p = 0; p < mask.size(); ++p) t[p] = static_cast<float>(mask.values[p]);
  write_file_atomic(path, encode_tensor(t));
}

Grid<double> load_mask(const std::filesystem::path& path) {
  const auto t = load_tensor_file(path.string());
  if (t.rank() != 2) fail_data(path.string() + ": mask must be rank 2");
  Grid<double> g(t.dim(0), t.dim(1));
  for (std::size_t p = 0; p < g.size(); ++p) g.values[p] = t[p];
  return g;
}

}  // namespace gfsr
