#pragma once

// Debug and preview images.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crfdepth/crf.hpp"
#include "crfdepth/io.hpp"
#include "crfdepth/superpixel.hpp"

namespace crfdepth {

// Polynomial fit of the "turbo" colormap, t in [0, 1].
inline std::array<std::uint8_t, 3> turbo(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = 0.13572138 + t * (4.61539260 + t * (-42.66032258 + t * (132.13108234 + t * (-152.94239396 + t * 59.28637943))));
  const double g = 0.09140261 + t * (2.19418839 + t * (4.84296658 + t * (-14.18503333 + t * (4.27729857 + t * 2.82956604))));
  const double b = 0.10667330 + t * (12.64194608 + t * (-60.58204836 + t * (110.36276771 + t * (-89.90310912 + t * 27.34824973))));
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

// Near = warm, far = cool; invalid pixels are black.
inline RgbImage depth_preview(const DepthImage& depth, double cap) {
  RgbImage out(depth.width, depth.height);
  for (std::size_t p = 0; p < depth.size(); ++p) {
    if (!depth.valid[p]) continue;
    const auto c = turbo(1.0 - std::clamp(depth.depth[p] / cap, 0.0, 1.0));
    std::copy(c.begin(), c.end(), out.pixels.begin() + static_cast<long>(3 * p));
  }
  return out;
}

// 8-bit grayscale, value = round(255 * unc).
inline std::vector<std::uint8_t> uncertainty_bytes(const UncertaintyMap& unc) {
  std::vector<std::uint8_t> v(unc.values.size());
  for (std::size_t p = 0; p < v.size(); ++p) {
    v[p] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(unc.values[p], 0.0, 1.0)));
  }
  return v;
}

inline std::vector<std::uint16_t> label_samples(const SuperpixelSegmentation& seg) {
  std::vector<std::uint16_t> v(seg.labels.size());
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = static_cast<std::uint16_t>(seg.labels[p]);
  return v;
}

// Image with segment boundaries (red), graph edges (green) and centroids
// (yellow).
inline RgbImage segmentation_overlay(const RgbImage& image, const SuperpixelSegmentation& seg,
                                     const FourNeighborGraph& graph) {
  RgbImage out = image;
  auto put = [&](int c, int r, std::array<std::uint8_t, 3> rgb) {
    if (c < 0 || r < 0 || c >= out.width || r >= out.height) return;
    const auto i = out.index(c, r);
    out.pixels[i] = rgb[0];
    out.pixels[i + 1] = rgb[1];
    out.pixels[i + 2] = rgb[2];
  };
  for (int r = 0; r < seg.height; ++r) {
    for (int c = 0; c < seg.width; ++c) {
      const int l = seg.label(c, r);
      const bool edge = (c + 1 < seg.width && seg.label(c + 1, r) != l) ||
                        (r + 1 < seg.height && seg.label(c, r + 1) != l);
      if (edge) put(c, r, {220, 30, 30});
    }
  }
  for (const auto& [i, j] : graph.edges) {
    const auto& a = seg.centroids[static_cast<std::size_t>(i)];
    const auto& b = seg.centroids[static_cast<std::size_t>(j)];
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(b.col - a.col), std::abs(b.row - a.row)))) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      put(static_cast<int>(std::lround(a.col + t * (b.col - a.col))),
          static_cast<int>(std::lround(a.row + t * (b.row - a.row))), {40, 200, 60});
    }
  }
  for (const auto& c : seg.centroids) {
    const int cc = static_cast<int>(std::lround(c.col)), rr = static_cast<int>(std::lround(c.row));
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) put(cc + dc, rr + dr, {250, 220, 30});
  }
  return out;
}

}  // namespace crfdepth
