#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <queue>
#include <vector>

#include "crfdepth/error.hpp"
#include "crfdepth/io.hpp"

namespace crfdepth {

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;             // camera-frame z'
  std::size_t source_index = 0;   // into the RawPointCloud
  Eigen::Vector3d position{0, 0, 0};  // rectified camera frame, meters
  std::optional<Eigen::Vector3d> normal;  // rectified camera frame, unit

  int col() const { return static_cast<int>(std::floor(u)); }
  int row() const { return static_cast<int>(std::floor(v)); }
};

struct NormalCloud {
  std::vector<Eigen::Vector3d> normals;
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return normals.size(); }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

// (x', y', z') = P_rect * R_rect * T_velo_cam * (x, y, z, 1), before the
// projective division.
inline std::vector<Eigen::Vector3d> transform_to_camera(const RawPointCloud& cloud,
                                                        const CalibrationSet& calib) {
  const Eigen::Matrix<double, 3, 4> chain = calib.p_rect * calib.r_rect * calib.t_velo_cam;
  std::vector<Eigen::Vector3d> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    out.push_back(chain * p.homogeneous());
  }
  return out;
}

// Drops points with z' <= 0 and points outside [0, width) x [0, height).
// Normals, when given, are rotated into the rectified camera frame.
inline std::vector<ProjectedPoint> project_points(const RawPointCloud& cloud,
                                                  const CalibrationSet& calib, int width, int height,
                                                  const NormalCloud* normals = nullptr) {
  if (width <= 0 || height <= 0) throw ValidationError("geometry", "image size must be positive");
  if (normals != nullptr && normals->size() != cloud.size()) {
    throw ValidationError("geometry", "normal cloud is not aligned with the point cloud");
  }
  const Eigen::Matrix4d to_rect = calib.velo_to_rect();
  const Eigen::Matrix3d rot = to_rect.topLeftCorner<3, 3>();
  const Eigen::Matrix<double, 3, 4> chain = calib.p_rect * to_rect;

  std::vector<ProjectedPoint> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector4d xh = cloud.points[i].homogeneous();
    const Eigen::Vector3d y = chain * xh;
    if (!(y.z() > 0.0)) continue;
    const double u = y.x() / y.z();
    const double v = y.y() / y.z();
    if (!(u >= 0.0 && u < width && v >= 0.0 && v < height)) continue;

    ProjectedPoint pp;
    pp.u = u;
    pp.v = v;
    pp.depth = y.z();
    pp.source_index = i;
    pp.position = (to_rect * xh).head<3>();
    if (normals != nullptr && normals->valid[i]) {
      pp.normal = (rot * normals->normals[i]).normalized();
    }
    out.push_back(pp);
  }
  return out;
}

// Static 3-d tree for exact k-nearest-neighbour queries. Ties in distance
// are broken by coordinates so results do not depend on input order.
class KdTree {
 public:
  explicit KdTree(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points.empty()) build(0, order_.size(), 0);
  }

  // Indices of the k nearest points to `query` (query's own index included
  // when it is part of the cloud), nearest first.
  std::vector<std::size_t> nearest(const Eigen::Vector3d& query, std::size_t k) const {
    Heap heap(Worse{this});
    if (!order_.empty() && k > 0) search(query, k, 0, order_.size(), 0, heap);
    std::vector<std::size_t> out(heap.size());
    for (auto i = out.size(); i-- > 0;) {
      out[i] = heap.top().index;
      heap.pop();
    }
    return out;
  }

 private:
  struct Candidate {
    double dist2;
    std::size_t index;
  };

  // Strict weak order: a is "less" than b when a is the better candidate.
  bool better(const Candidate& a, const Candidate& b) const {
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    const auto& pa = points_[a.index];
    const auto& pb = points_[b.index];
    for (int d = 0; d < 3; ++d) {
      if (pa[d] != pb[d]) return pa[d] < pb[d];
    }
    return a.index < b.index;
  }

  struct Worse {
    const KdTree* tree;
    bool operator()(const Candidate& a, const Candidate& b) const { return tree->better(a, b); }
  };
  using Heap = std::priority_queue<Candidate, std::vector<Candidate>, Worse>;

  void build(std::size_t begin, std::size_t end, int depth) {
    if (end - begin <= 1) return;
    const int axis = depth % 3;
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<long>(begin), order_.begin() + static_cast<long>(mid),
                     order_.begin() + static_cast<long>(end), [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    build(begin, mid, depth + 1);
    build(mid + 1, end, depth + 1);
  }

  void search(const Eigen::Vector3d& q, std::size_t k, std::size_t begin, std::size_t end, int depth,
              Heap& heap) const {
    if (begin >= end) return;
    const int axis = depth % 3;
    const std::size_t mid = begin + (end - begin) / 2;
    const std::size_t idx = order_[mid];
    const Candidate c{(points_[idx] - q).squaredNorm(), idx};
    if (heap.size() < k) {
      heap.push(c);
    } else if (better(c, heap.top())) {
      heap.pop();
      heap.push(c);
    }
    const double diff = q[axis] - points_[idx][axis];
    const bool left_first = diff < 0.0;
    if (left_first) search(q, k, begin, mid, depth + 1, heap);
    else search(q, k, mid + 1, end, depth + 1, heap);
    if (heap.size() < k || diff * diff <= heap.top().dist2) {
      if (left_first) search(q, k, mid + 1, end, depth + 1, heap);
      else search(q, k, begin, mid, depth + 1, heap);
    }
  }

  const std::vector<Eigen::Vector3d>& points_;
  std::vector<std::size_t> order_;
};

inline constexpr int kDefaultNormalNeighbors = 10;

// PCA plane fit over the k nearest neighbours (the point itself included);
// normals face the sensor origin. A point is invalid when its neighbourhood
// has fewer than k-1 positions distinct from it or is collinear.
inline NormalCloud estimate_normals(const RawPointCloud& cloud, int k = kDefaultNormalNeighbors) {
  if (k < 3) throw ValidationError("geometry", "normal neighbourhood size must be >= 3");
  NormalCloud out;
  out.normals.assign(cloud.size(), Eigen::Vector3d::Zero());
  out.valid.assign(cloud.size(), 0);
  if (cloud.size() < 3) return out;

  const KdTree tree(cloud.points);
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const auto nbrs = tree.nearest(p, kk);
    std::size_t distinct = 0;
    for (auto j : nbrs) {
      if (cloud.points[j] != p) ++distinct;
    }
    if (distinct + 1 < kk) continue;

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (auto j : nbrs) mean += cloud.points[j];
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto j : nbrs) {
      const Eigen::Vector3d d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    if (eig.info() != Eigen::Success) continue;
    const auto& lambda = eig.eigenvalues();  // ascending
    if (!(lambda(1) > 1e-12 * std::max(lambda(2), 1e-300))) continue;

    Eigen::Vector3d n = eig.eigenvectors().col(0).normalized();
    if (n.dot(p) > 0.0) n = -n;
    out.normals[i] = n;
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace crfdepth
