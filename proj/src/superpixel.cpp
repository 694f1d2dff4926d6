#include "gfsr/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <deque>
#include <limits>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"
#include "gfsr/tensor_io.hpp"

namespace gfsr {

namespace {

double srgb_to_linear(double v) {
  v /= 255.0;
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

Lab srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = srgb_to_linear(r8), g = srgb_to_linear(g8), b = srgb_to_linear(b8);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  // D65 reference white, consistent with the matrix rows above.
  constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
  constexpr double yn = 1.0;
  constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;
  const double fx = lab_f(x / xn), fy = lab_f(y / yn), fz = lab_f(z / zn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Grid<Lab> rgb_to_lab(const Image& img) {
  if (!img.valid()) fail_data("rgb_to_lab: invalid image");
  Grid<Lab> out(img.height, img.width);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (img.channels == 1) {
      const auto v = img.data[i];
      out.values[i] = srgb_to_lab(v, v, v);
    } else {
      out.values[i] = srgb_to_lab(img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]);
    }
  }
  return out;
}

void SlicParams::validate() const {
  if (k < 1) fail_data("slic: K must be >= 1");
  if (!(compactness > 0)) fail_data("slic: compactness must be > 0");
  if (max_iter < 1) fail_data("slic: max_iter must be >= 1");
}

double slic_interval(std::size_t rows, std::size_t cols, std::size_t k) {
  return std::sqrt(static_cast<double>(rows * cols) / static_cast<double>(k));
}

void SegmentMap::recount() {
  std::int32_t max_label = -1;
  for (auto l : labels) max_label = std::max(max_label, l);
  n_segments = static_cast<std::size_t>(max_label + 1);
  sizes.assign(n_segments, 0);
  centroids.assign(n_segments, {0.0, 0.0});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto l = static_cast<std::size_t>(labels[r * cols + c]);
      ++sizes[l];
      centroids[l][0] += static_cast<double>(r);
      centroids[l][1] += static_cast<double>(c);
    }
  }
  for (std::size_t s = 0; s < n_segments; ++s) {
    if (sizes[s]) {
      centroids[s][0] /= static_cast<double>(sizes[s]);
      centroids[s][1] /= static_cast<double>(sizes[s]);
    }
  }
}

SegmentMap enforce_connectivity(std::size_t rows, std::size_t cols,
                                const std::vector<std::int32_t>& raw, std::size_t min_size) {
  if (raw.size() != rows * cols) fail_data("enforce_connectivity: label count mismatch");
  const std::size_t n = rows * cols;

  // 1. 4-connected components of the raw labelling, numbered in scan order.
  std::vector<std::int32_t> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<std::size_t> queue;
  auto neighbours = [&](std::size_t p, auto&& fn) {
    const std::size_t r = p / cols, c = p % cols;
    if (c > 0) fn(p - 1);
    if (r > 0) fn(p - cols);
    if (c + 1 < cols) fn(p + 1);
    if (r + 1 < rows) fn(p + cols);
  };
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const auto id = static_cast<std::int32_t>(comp_size.size());
    queue.assign(1, start);
    comp[start] = id;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      neighbours(queue[head], [&](std::size_t q) {
        if (comp[q] < 0 && raw[q] == raw[start]) {
          comp[q] = id;
          queue.push_back(q);
        }
      });
    }
    comp_size.push_back(queue.size());
  }
  const std::size_t m = comp_size.size();

  // 2. Shared border lengths between components.
  std::vector<std::map<std::int32_t, std::size_t>> border(m);
  for (std::size_t p = 0; p < n; ++p) {
    neighbours(p, [&](std::size_t q) {
      if (comp[q] != comp[p]) ++border[static_cast<std::size_t>(comp[p])][comp[q]];
    });
  }

  // 3. Components of at least min_size keep their identity; if none does, the
  // largest one (earliest on ties) seeds the single surviving segment.
  std::vector<std::int32_t> owner(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    if (comp_size[i] >= min_size) owner[i] = static_cast<std::int32_t>(i);
  }
  if (std::none_of(owner.begin(), owner.end(), [](std::int32_t o) { return o >= 0; })) {
    const auto big = std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin();
    owner[static_cast<std::size_t>(big)] = static_cast<std::int32_t>(big);
  }

  // 4. Small components are absorbed in rounds into the adjacent owned region
  // with the longest shared border (lowest owner id on ties).
  for (bool changed = true; changed;) {
    changed = false;
    auto next = owner;
    for (std::size_t i = 0; i < m; ++i) {
      if (owner[i] >= 0) continue;
      std::map<std::int32_t, std::size_t> votes;
      for (const auto& [j, len] : border[i]) {
        const auto o = owner[static_cast<std::size_t>(j)];
        if (o >= 0) votes[o] += len;
      }
      std::int32_t pick = -1;
      std::size_t best = 0;
      for (const auto& [o, len] : votes) {
        if (len > best) {
          best = len;
          pick = o;
        }
      }
      if (pick >= 0) {
        next[i] = pick;
        changed = true;
      }
    }
    owner.swap(next);
  }

  // 5. Dense relabelling in scan order.
  SegmentMap seg;
  seg.rows = rows;
  seg.cols = cols;
  seg.labels.assign(n, -1);
  std::vector<std::int32_t> dense(m, -1);
  std::int32_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto o = static_cast<std::size_t>(owner[static_cast<std::size_t>(comp[p])]);
    if (dense[o] < 0) dense[o] = count++;
    seg.labels[p] = dense[o];
  }
  seg.recount();
  return seg;
}

SegmentMap slic(const Grid<Lab>& lab, const SlicParams& params) {
  params.validate();
  const std::size_t rows = lab.rows, cols = lab.cols;
  const std::size_t n = rows * cols;
  if (n == 0) fail_data("slic: empty image");
  if (params.k > n) {
    fail_data("slic: K=" + std::to_string(params.k) + " exceeds pixel count " + std::to_string(n));
  }
  const double step = slic_interval(rows, cols, params.k);

  // Squared L-gradient used to nudge seeds off edges.
  auto gradient = [&](std::size_t r, std::size_t c) {
    const std::size_t r0 = r > 0 ? r - 1 : r, r1 = r + 1 < rows ? r + 1 : r;
    const std::size_t c0 = c > 0 ? c - 1 : c, c1 = c + 1 < cols ? c + 1 : c;
    const double gx = lab.at(r, c1).l - lab.at(r, c0).l;
    const double gy = lab.at(r1, c).l - lab.at(r0, c).l;
    return gx * gx + gy * gy;
  };

  struct Center {
    double l, a, b, r, c;
  };
  std::vector<Center> centers;
  const auto grid_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(rows / step)));
  const auto grid_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cols / step)));
  for (std::size_t i = 0; i < grid_rows; ++i) {
    for (std::size_t j = 0; j < grid_cols; ++j) {
      auto r = static_cast<std::size_t>((i + 0.5) * rows / grid_rows);
      auto c = static_cast<std::size_t>((j + 0.5) * cols / grid_cols);
      std::size_t best_r = r, best_c = c;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t rr = r > 0 ? r - 1 : 0; rr <= std::min(rows - 1, r + 1); ++rr) {
        for (std::size_t cc = c > 0 ? c - 1 : 0; cc <= std::min(cols - 1, c + 1); ++cc) {
          const double g = gradient(rr, cc);
          if (g < best) {
            best = g;
            best_r = rr;
            best_c = cc;
          }
        }
      }
      const Lab& p = lab.at(best_r, best_c);
      centers.push_back({p.l, p.a, p.b, static_cast<double>(best_r), static_cast<double>(best_c)});
    }
  }

  const double spatial_weight = (params.compactness / step) * (params.compactness / step);
  auto distance2 = [&](const Center& k, std::size_t r, std::size_t c) {
    const Lab& p = lab.at(r, c);
    const double dl = p.l - k.l, da = p.a - k.a, db = p.b - k.b;
    const double dy = r - k.r, dx = c - k.c;
    return dl * dl + da * da + db * db + (dy * dy + dx * dx) * spatial_weight;
  };

  std::vector<std::int32_t> assign(n, -1);
  std::vector<double> best(n);
  for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    std::fill(assign.begin(), assign.end(), -1);
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& ck = centers[k];
      const auto r0 = static_cast<long>(std::floor(ck.r - step));
      const auto r1 = static_cast<long>(std::ceil(ck.r + step));
      const auto c0 = static_cast<long>(std::floor(ck.c - step));
      const auto c1 = static_cast<long>(std::ceil(ck.c + step));
      for (long r = std::max(0L, r0); r <= std::min<long>(rows - 1, r1); ++r) {
        for (long c = std::max(0L, c0); c <= std::min<long>(cols - 1, c1); ++c) {
          const auto p = static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
          const double d = distance2(ck, r, c);
          if (d < best[p]) {
            best[p] = d;
            assign[p] = static_cast<std::int32_t>(k);
          }
        }
      }
    }
    // Pixels outside every window fall back to a global nearest-centre search.
    for (std::size_t p = 0; p < n; ++p) {
      if (assign[p] >= 0) continue;
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = distance2(centers[k], p / cols, p % cols);
        if (d < best[p]) {
          best[p] = d;
          assign[p] = static_cast<std::int32_t>(k);
        }
      }
    }

    std::vector<Center> sum(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto k = static_cast<std::size_t>(assign[p]);
      const Lab& v = lab.values[p];
      sum[k].l += v.l;
      sum[k].a += v.a;
      sum[k].b += v.b;
      sum[k].r += static_cast<double>(p / cols);
      sum[k].c += static_cast<double>(p % cols);
      ++count[k];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (!count[k]) continue;
      const double inv = 1.0 / static_cast<double>(count[k]);
      centers[k] = {sum[k].l * inv, sum[k].a * inv, sum[k].b * inv, sum[k].r * inv, sum[k].c * inv};
    }
  }

  const auto min_size = std::max<std::size_t>(1, static_cast<std::size_t>(step * step / 4.0));
  return enforce_connectivity(rows, cols, assign, min_size);
}

std::vector<bool> boundary_pixels(const SegmentMap& seg) {
  std::vector<bool> out(seg.labels.size(), false);
  for (std::size_t r = 0; r < seg.rows; ++r) {
    for (std::size_t c = 0; c < seg.cols; ++c) {
      const auto l = seg.at(r, c);
      const bool edge = (r > 0 && seg.at(r - 1, c) != l) ||
                        (r + 1 < seg.rows && seg.at(r + 1, c) != l) ||
                        (c > 0 && seg.at(r, c - 1) != l) ||
                        (c + 1 < seg.cols && seg.at(r, c + 1) != l);
      out[r * seg.cols + c] = edge;
    }
  }
  return out;
}

std::string centroid_table(const SegmentMap& seg) {
  std::string out = "segment,row,col,size\n";
  char buf[128];
  for (std::size_t s = 0; s < seg.n_segments; ++s) {
    std::snprintf(buf, sizeof buf, "%zu,%.3f,%.3f,%zu\n", s, seg.centroids[s][0],
                  seg.centroids[s][1], seg.sizes[s]);
    out += buf;
  }
  return out;
}

Overlay segment_overlay(const Image& img, const SegmentMap& seg) {
  if (img.height != seg.rows || img.width != seg.cols) {
    fail_data("segment_overlay: image is " + std::to_string(img.height) + "x" +
              std::to_string(img.width) + " but segment map is " + std::to_string(seg.rows) +
              "x" + std::to_string(seg.cols));
  }
  Overlay out{to_rgb(img), centroid_table(seg)};
  const auto edges = boundary_pixels(seg);
  for (std::size_t p = 0; p < edges.size(); ++p) {
    if (!edges[p]) continue;
    out.image.data[3 * p] = 255;
    out.image.data[3 * p + 1] = 0;
    out.image.data[3 * p + 2] = 0;
  }
  return out;
}

void save_segment_map(const SegmentMap& seg, const std::string& tensor_path,
                      const std::string& table_path) {
  Tensor<std::int32_t> t({seg.rows, seg.cols}, seg.labels);
  write_file_atomic(tensor_path, encode_tensor(t));
  write_file_atomic(table_path, centroid_table(seg));
}

SegmentMap load_segment_map(const std::string& tensor_path) {
  auto t = decode_tensor<std::int32_t>(read_file(tensor_path));
  if (t.rank() != 2) fail_data(tensor_path + ": segment map must be rank 2");
  SegmentMap seg;
  seg.rows = t.dim(0);
  seg.cols = t.dim(1);
  seg.labels = std::move(t.storage());
  for (auto l : seg.labels) {
    if (l < 0) fail_data(tensor_path + ": negative segment label");
  }
  seg.recount();
  for (auto s : seg.sizes) {
    if (!s) fail_data(tensor_path + ": segment labels are not dense");
  }
  return seg;
}

}  // namespace gfsr
