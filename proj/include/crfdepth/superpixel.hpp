#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "crfdepth/error.hpp"
#include "crfdepth/io.hpp"

namespace crfdepth {

struct PixelCoord {
  double row = 0.0;
  double col = 0.0;
};

struct SuperpixelSegmentation {
  int width = 0;
  int height = 0;
  int n_segments = 0;
  std::vector<int> labels;  // row-major, values in [0, n_segments)
  std::vector<PixelCoord> centroids;
  std::vector<std::array<double, 3>> mean_color;  // RGB, 0..255
  std::vector<int> pixel_count;

  int label(int col, int row) const { return labels[static_cast<std::size_t>(row) * width + col]; }
};

// Slot order follows the slot angle: 0, 90, 180, 270 degrees measured
// counter-clockwise from the +x image axis as displayed (rows grow downward).
enum Slot : int { kRight = 0, kUp = 1, kLeft = 2, kDown = 3 };

struct FourNeighborGraph {
  int n_nodes = 0;
  std::vector<std::array<int, 4>> slots;   // -1 = empty
  std::vector<std::pair<int, int>> edges;  // first < second, sorted, unique
};

inline constexpr int kSlicIterations = 10;

namespace detail {

struct Lab {
  double l, a, b;
};

inline const std::array<double, 256>& srgb_to_linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double c = i / 255.0;
      t[static_cast<std::size_t>(i)] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    }
    return t;
  }();
  return table;
}

// sRGB (D65) to CIELAB.
inline Lab rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const auto& lin = srgb_to_linear_table();
  const double r = lin[r8], g = lin[g8], b = lin[b8];
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = (0.2126729 * r + 0.7151522 * g + 0.0721750 * b) / 1.0;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  constexpr double eps = 216.0 / 24389.0;
  constexpr double kappa = 24389.0 / 27.0;
  auto f = [](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace detail

// Recomputes centroids, mean colours and pixel counts from a label map.
inline void compute_segment_stats(const RgbImage& image, SuperpixelSegmentation& seg) {
  const auto n = static_cast<std::size_t>(seg.n_segments);
  std::vector<double> sum_r(n, 0.0), sum_c(n, 0.0);
  std::vector<std::array<double, 3>> sum_rgb(n, {0.0, 0.0, 0.0});
  seg.pixel_count.assign(n, 0);
  for (int r = 0; r < seg.height; ++r) {
    for (int c = 0; c < seg.width; ++c) {
      const auto l = static_cast<std::size_t>(seg.label(c, r));
      sum_r[l] += r;
      sum_c[l] += c;
      const auto px = image.index(c, r);
      for (int ch = 0; ch < 3; ++ch) sum_rgb[l][static_cast<std::size_t>(ch)] += image.pixels[px + ch];
      ++seg.pixel_count[l];
    }
  }
  seg.centroids.resize(n);
  seg.mean_color.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    const double cnt = seg.pixel_count[l];
    seg.centroids[l] = {sum_r[l] / cnt, sum_c[l] / cnt};
    for (std::size_t ch = 0; ch < 3; ++ch) seg.mean_color[l][ch] = sum_rgb[l][ch] / cnt;
  }
}

namespace detail {

// Keeps the largest 4-connected component of every label and hands each
// remaining (orphan) component to the largest adjacent segment. Labels are
// compacted to [0, n) in ascending order of their old ids.
inline int enforce_connectivity(int width, int height, std::vector<int>& labels) {
  const std::size_t n_px = labels.size();
  std::vector<int> comp(n_px, -1);
  std::vector<int> comp_label;
  std::vector<long> comp_size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n_px; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_label.size());
    const int lab = labels[start];
    long size = 0;
    stack.assign(1, start);
    comp[start] = id;
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(p / static_cast<std::size_t>(width));
      const int c = static_cast<int>(p % static_cast<std::size_t>(width));
      const std::array<std::pair<int, int>, 4> nb = {{{c + 1, r}, {c - 1, r}, {c, r + 1}, {c, r - 1}}};
      for (auto [nc, nr] : nb) {
        if (nc < 0 || nr < 0 || nc >= width || nr >= height) continue;
        const auto q = static_cast<std::size_t>(nr) * width + nc;
        if (comp[q] < 0 && labels[q] == lab) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    comp_label.push_back(lab);
    comp_size.push_back(size);
  }

  const auto n_comp = comp_label.size();
  const int max_label = *std::max_element(labels.begin(), labels.end());
  std::vector<int> main_comp(static_cast<std::size_t>(max_label) + 1, -1);
  for (std::size_t c = 0; c < n_comp; ++c) {
    auto& m = main_comp[static_cast<std::size_t>(comp_label[c])];
    if (m < 0 || comp_size[c] > comp_size[static_cast<std::size_t>(m)]) m = static_cast<int>(c);
  }

  // owner[c] = label the component ends up with, -1 while unresolved
  std::vector<int> owner(n_comp, -1);
  std::vector<long> label_size(main_comp.size(), 0);
  for (std::size_t l = 0; l < main_comp.size(); ++l) {
    if (main_comp[l] >= 0) {
      owner[static_cast<std::size_t>(main_comp[l])] = static_cast<int>(l);
      label_size[l] = comp_size[static_cast<std::size_t>(main_comp[l])];
    }
  }

  std::vector<std::vector<int>> comp_adj(n_comp);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto p = static_cast<std::size_t>(r) * width + c;
      if (c + 1 < width && comp[p] != comp[p + 1]) {
        comp_adj[static_cast<std::size_t>(comp[p])].push_back(comp[p + 1]);
        comp_adj[static_cast<std::size_t>(comp[p + 1])].push_back(comp[p]);
      }
      if (r + 1 < height && comp[p] != comp[p + width]) {
        comp_adj[static_cast<std::size_t>(comp[p])].push_back(comp[p + width]);
        comp_adj[static_cast<std::size_t>(comp[p + width])].push_back(comp[p]);
      }
    }
  }
  for (auto& a : comp_adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  bool pending = true;
  while (pending) {
    pending = false;
    bool progressed = false;
    for (std::size_t c = 0; c < n_comp; ++c) {
      if (owner[c] >= 0) continue;
      int best = -1;
      for (int d : comp_adj[c]) {
        const int l = owner[static_cast<std::size_t>(d)];
        if (l < 0) continue;
        if (best < 0 || label_size[static_cast<std::size_t>(l)] > label_size[static_cast<std::size_t>(best)] ||
            (label_size[static_cast<std::size_t>(l)] == label_size[static_cast<std::size_t>(best)] && l < best)) {
          best = l;
        }
      }
      if (best < 0) {
        pending = true;
        continue;
      }
      owner[c] = best;
      label_size[static_cast<std::size_t>(best)] += comp_size[c];
      progressed = true;
    }
    if (pending && !progressed) break;  // unreachable for a connected pixel grid
  }

  std::vector<int> remap(main_comp.size(), -1);
  int next = 0;
  for (std::size_t l = 0; l < main_comp.size(); ++l) {
    if (main_comp[l] >= 0) remap[l] = next++;
  }
  for (std::size_t p = 0; p < n_px; ++p) {
    labels[p] = remap[static_cast<std::size_t>(owner[static_cast<std::size_t>(comp[p])])];
  }
  return next;
}

}  // namespace detail

// SLIC: k-means in joint CIELAB + image-plane space, grid seeding without
// gradient perturbation, a fixed 10 iterations, then connectivity
// enforcement. Ties go to the lowest cluster index.
inline SuperpixelSegmentation slic_segment(const RgbImage& image, int n_superpixels,
                                           double compactness) {
  const int w = image.width;
  const int h = image.height;
  if (w < 2 || h < 2) throw ValidationError("superpixel", "image must be at least 2x2");
  if (image.pixels.size() != static_cast<std::size_t>(w) * h * 3) {
    throw ValidationError("superpixel", "pixel buffer length does not match image size");
  }
  if (n_superpixels < 2 || static_cast<long>(n_superpixels) > static_cast<long>(w) * h / 4) {
    throw ValidationError("superpixel", "n_superpixels must lie in [2, width*height/4]");
  }
  if (!(compactness > 0.0)) throw ValidationError("superpixel", "compactness must be > 0");

  const std::size_t n_px = static_cast<std::size_t>(w) * h;
  std::vector<detail::Lab> lab(n_px);
  for (std::size_t p = 0; p < n_px; ++p) {
    lab[p] = detail::rgb_to_lab(image.pixels[3 * p], image.pixels[3 * p + 1], image.pixels[3 * p + 2]);
  }

  const double spacing = std::sqrt(static_cast<double>(n_px) / n_superpixels);
  int nx = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_superpixels) * w / h) - 1e-9)));
  nx = std::min(nx, w);
  int ny = std::max(1, static_cast<int>(std::lround(static_cast<double>(n_superpixels) / nx)));
  ny = std::min(ny, h);
  const double cell_w = static_cast<double>(w) / nx;
  const double cell_h = static_cast<double>(h) / ny;
  const int half = static_cast<int>(std::ceil(std::max(cell_w, cell_h)));
  const double spatial = (compactness / spacing) * (compactness / spacing);

  struct Center {
    double l, a, b, x, y;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = (i + 0.5) * cell_w;
      const double y = (j + 0.5) * cell_h;
      const auto p = static_cast<std::size_t>(std::min(h - 1, static_cast<int>(y))) * w +
                     std::min(w - 1, static_cast<int>(x));
      centers.push_back({lab[p].l, lab[p].a, lab[p].b, x, y});
    }
  }

  std::vector<int> labels(n_px);
  for (int r = 0; r < h; ++r) {
    const int j = std::min(ny - 1, static_cast<int>(r / cell_h));
    for (int c = 0; c < w; ++c) {
      const int i = std::min(nx - 1, static_cast<int>(c / cell_w));
      labels[static_cast<std::size_t>(r) * w + c] = j * nx + i;
    }
  }

  std::vector<double> dist(n_px);
  const auto k_count = centers.size();
  std::vector<double> acc(k_count * 6);
  for (int iter = 0; iter < kSlicIterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& ck = centers[k];
      const int c0 = std::max(0, static_cast<int>(std::floor(ck.x)) - half);
      const int c1 = std::min(w - 1, static_cast<int>(std::floor(ck.x)) + half);
      const int r0 = std::max(0, static_cast<int>(std::floor(ck.y)) - half);
      const int r1 = std::min(h - 1, static_cast<int>(std::floor(ck.y)) + half);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const auto p = static_cast<std::size_t>(r) * w + c;
          const double dl = lab[p].l - ck.l, da = lab[p].a - ck.a, db = lab[p].b - ck.b;
          const double dx = c - ck.x, dy = r - ck.y;
          const double d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatial;
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(k);
          }
        }
      }
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto p = static_cast<std::size_t>(r) * w + c;
        auto* a = &acc[static_cast<std::size_t>(labels[p]) * 6];
        a[0] += lab[p].l;
        a[1] += lab[p].a;
        a[2] += lab[p].b;
        a[3] += c;
        a[4] += r;
        a[5] += 1.0;
      }
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto* a = &acc[k * 6];
      if (a[5] > 0.0) centers[k] = {a[0] / a[5], a[1] / a[5], a[2] / a[5], a[3] / a[5], a[4] / a[5]};
    }
  }

  SuperpixelSegmentation seg;
  seg.width = w;
  seg.height = h;
  seg.n_segments = detail::enforce_connectivity(w, h, labels);
  seg.labels = std::move(labels);
  compute_segment_stats(image, seg);
  return seg;
}

// Segments a and b are raw neighbours iff some pixel of a is 4-adjacent to
// some pixel of b. Each list is sorted ascending.
inline std::vector<std::vector<int>> build_raw_adjacency(const SuperpixelSegmentation& seg) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(seg.n_segments));
  auto link = [&](int a, int b) {
    if (a == b) return;
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  };
  for (int r = 0; r < seg.height; ++r) {
    for (int c = 0; c < seg.width; ++c) {
      const int l = seg.label(c, r);
      if (c + 1 < seg.width) link(l, seg.label(c + 1, r));
      if (r + 1 < seg.height) link(l, seg.label(c, r + 1));
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

// Angle in degrees [0, 360) of the vector from centroid `from` to centroid
// `to`; 0 = +x, counter-clockwise as displayed.
inline double centroid_angle(const PixelCoord& from, const PixelCoord& to) {
  const double deg = std::atan2(-(to.row - from.row), to.col - from.col) * 180.0 / std::numbers::pi;
  return deg < 0.0 ? deg + 360.0 : deg;
}

inline double circular_difference(double a_deg, double b_deg) {
  const double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(d, 360.0 - d);
}

// Per node, assigns raw neighbours to the four slot angles greedily by
// angular error (ties: lower slot, then lower id); a neighbour fills at most
// one slot. The edge set is the symmetrized union of all slot choices.
inline FourNeighborGraph select_four_neighbors(const SuperpixelSegmentation& seg,
                                               const std::vector<std::vector<int>>& raw_adjacency) {
  if (raw_adjacency.size() != static_cast<std::size_t>(seg.n_segments)) {
    throw ValidationError("superpixel", "adjacency does not match the segmentation");
  }
  FourNeighborGraph g;
  g.n_nodes = seg.n_segments;
  g.slots.assign(static_cast<std::size_t>(g.n_nodes), {-1, -1, -1, -1});

  struct Option {
    double error;
    int slot;
    int candidate;
  };
  std::vector<Option> options;
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto& cand = raw_adjacency[static_cast<std::size_t>(i)];
    options.clear();
    for (int j : cand) {
      const double angle = centroid_angle(seg.centroids[static_cast<std::size_t>(i)],
                                          seg.centroids[static_cast<std::size_t>(j)]);
      for (int s = 0; s < 4; ++s) options.push_back({circular_difference(angle, 90.0 * s), s, j});
    }
    std::sort(options.begin(), options.end(), [](const Option& a, const Option& b) {
      if (a.error != b.error) return a.error < b.error;
      if (a.slot != b.slot) return a.slot < b.slot;
      return a.candidate < b.candidate;
    });
    auto& slots = g.slots[static_cast<std::size_t>(i)];
    std::vector<int> used;
    for (const auto& o : options) {
      if (slots[static_cast<std::size_t>(o.slot)] >= 0) continue;
      if (std::find(used.begin(), used.end(), o.candidate) != used.end()) continue;
      slots[static_cast<std::size_t>(o.slot)] = o.candidate;
      used.push_back(o.candidate);
      if (used.size() == 4) break;
    }
    for (int j : slots) {
      if (j >= 0) g.edges.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

inline FourNeighborGraph build_four_neighbor_graph(const SuperpixelSegmentation& seg) {
  return select_four_neighbors(seg, build_raw_adjacency(seg));
}

}  // namespace crfdepth
