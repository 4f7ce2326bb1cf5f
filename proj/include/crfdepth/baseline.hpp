#pragma once

// Nearest-neighbour interpolation of projected LiDAR depths, the reference
// the CRF completion is compared against.

#include <vector>

#include "crfdepth/geometry.hpp"
#include "crfdepth/io.hpp"

namespace crfdepth {

// Each pixel takes the depth of the projected point nearest to it in the
// image plane (pixel (c, r) sits at (c, r)); ties go to the lexicographically
// smallest (u, v).
inline DepthImage nearest_neighbor_fill(int width, int height, const std::vector<ProjectedPoint>& points) {
  DepthImage out(width, height);
  if (points.empty()) return out;
  std::vector<Eigen::Vector3d> plane;
  plane.reserve(points.size());
  for (const auto& p : points) plane.emplace_back(p.u, p.v, 0.0);
  const KdTree tree(plane);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto nn = tree.nearest(Eigen::Vector3d(c, r, 0.0), 1);
      out.set(static_cast<std::size_t>(r) * width + c, points[nn.front()].depth);
    }
  }
  return out;
}

}  // namespace crfdepth
