#pragma once

// Procedural piecewise-planar street scene with exact per-pixel depth, used
// as the bundled evaluation fixture. Colour boundaries coincide with depth
// boundaries; LiDAR returns are drawn from a random subset of pixels.

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <limits>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crfdepth/io.hpp"
#include "crfdepth/random.hpp"

namespace crfdepth {

struct FrameData {
  std::string frame_id;
  RgbImage image;
  RawPointCloud cloud;
  CalibrationSet calib;
  std::optional<DepthImage> gt;
};

struct SyntheticOptions {
  int width = 320;
  int height = 240;
  double sample_fraction = 0.05;  // share of pixels that receive a LiDAR return
  double range_noise = 0.03;      // meters, 1-sigma along the ray
  int texture_amplitude = 6;      // +- per channel
  std::uint64_t seed = 7;
};

namespace detail {

// A planar patch n . X = d in the rectified camera frame.
struct ScenePlane {
  Eigen::Vector3d normal;
  double offset;
  std::array<int, 3> rgb;

  // Depth along the ray through normalized image coordinates (xn, yn).
  double depth_at(double xn, double yn) const {
    const double denom = normal.x() * xn + normal.y() * yn + normal.z();
    return denom > 1e-9 ? offset / denom : std::numeric_limits<double>::infinity();
  }
};

struct SceneRect {
  double s0, s1, t0, t1;  // fractions of width / height
  int plane;
};

struct Scene {
  std::vector<ScenePlane> planes;
  std::vector<SceneRect> rects;  // painted last-wins over wall and ground
  double fu, fv, cu, cv;
  int width, height;

  // Region index of pixel (c, r): rectangles first, then ground vs wall.
  int region(int c, int r) const {
    const double s = (c + 0.5) / width, t = (r + 0.5) / height;
    for (auto it = rects.rbegin(); it != rects.rend(); ++it) {
      if (s >= it->s0 && s < it->s1 && t >= it->t0 && t < it->t1) return it->plane;
    }
    const double xn = (c - cu) / fu, yn = (r - cv) / fv;
    return planes[1].depth_at(xn, yn) < planes[0].depth_at(xn, yn) ? 1 : 0;
  }

  double depth(int plane, double u, double v) const {
    return planes[static_cast<std::size_t>(plane)].depth_at((u - cu) / fu, (v - cv) / fv);
  }
};

inline Scene street_scene(int width, int height) {
  Scene s;
  s.width = width;
  s.height = height;
  s.fu = s.fv = 0.78 * width;
  s.cu = 0.5 * width;
  s.cv = 0.5 * height;
  s.planes = {
      {Eigen::Vector3d(0.25, 0.0, 1.0), 24.0, {150, 170, 205}},  // slanted back wall
      {Eigen::Vector3d(0.0, 1.0, 0.0), 1.5, {88, 88, 96}},       // ground
      {Eigen::Vector3d(-0.7, 0.0, 1.0), 12.0, {172, 72, 50}},    // building face, left
      {Eigen::Vector3d(0.1, 0.0, 1.0), 6.0, {222, 190, 62}},     // box
      {Eigen::Vector3d(0.6, -0.3, 1.0), 15.0, {60, 142, 72}},    // hedge panel, right
  };
  s.rects = {
      {0.05, 0.35, 0.15, 0.62, 2},
      {0.45, 0.62, 0.40, 0.70, 3},
      {0.70, 0.95, 0.25, 0.60, 4},
  };
  return s;
}

}  // namespace detail

inline CalibrationSet synthetic_calibration(int width, int height) {
  CalibrationSet calib;
  const double f = 0.78 * width;
  calib.p_rect << f, 0, 0.5 * width, 0, 0, f, 0.5 * height, 0, 0, 0, 1, 0;
  calib.r_rect = Eigen::Matrix4d::Identity();
  calib.r_rect.topLeftCorner<3, 3>() =
      Eigen::AngleAxisd(0.004, Eigen::Vector3d(0.2, 1.0, 0.1).normalized()).toRotationMatrix();
  calib.t_velo_cam = Eigen::Matrix4d::Identity();
  // KITTI-style axes: LiDAR x forward, y left, z up.
  calib.t_velo_cam.topLeftCorner<3, 3>() << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  calib.t_velo_cam.topRightCorner<3, 1>() << 0.0, -0.08, -0.27;
  return calib;
}

inline FrameData make_synthetic_frame(const SyntheticOptions& opt = {}) {
  const auto scene = detail::street_scene(opt.width, opt.height);
  Rng rng(opt.seed);
  FrameData f;
  f.frame_id = "synthetic";
  f.calib = synthetic_calibration(opt.width, opt.height);
  f.image = RgbImage(opt.width, opt.height);
  f.gt = DepthImage(opt.width, opt.height);

  std::vector<int> region(static_cast<std::size_t>(opt.width) * opt.height);
  for (int r = 0; r < opt.height; ++r) {
    for (int c = 0; c < opt.width; ++c) {
      const auto p = static_cast<std::size_t>(r) * opt.width + c;
      region[p] = scene.region(c, r);
      const auto& plane = scene.planes[static_cast<std::size_t>(region[p])];
      for (int ch = 0; ch < 3; ++ch) {
        const int jitter = static_cast<int>(rng.index(2 * static_cast<std::size_t>(opt.texture_amplitude) + 1)) -
                           opt.texture_amplitude;
        f.image.pixels[3 * p + static_cast<std::size_t>(ch)] =
            static_cast<std::uint8_t>(std::clamp(plane.rgb[static_cast<std::size_t>(ch)] + jitter, 0, 255));
      }
      f.gt->set(p, scene.depth(region[p], c, r));
    }
  }

  const Eigen::Matrix4d rect_to_velo = f.calib.velo_to_rect().inverse();
  const auto n_px = region.size();
  const auto n_pts = static_cast<std::size_t>(std::lround(opt.sample_fraction * static_cast<double>(n_px)));
  for (auto p : sample_without_replacement(n_px, n_pts, rng)) {
    const int r = static_cast<int>(p / static_cast<std::size_t>(opt.width));
    const int c = static_cast<int>(p % static_cast<std::size_t>(opt.width));
    // stay clear of the right/bottom image border so the return projects
    // into pixel (c, r) after the float round trip
    const double u = c + rng.uniform(0.02, 0.98);
    const double v = r + rng.uniform(0.02, 0.98);
    const double z = scene.depth(region[p], u, v);
    Eigen::Vector3d x((u - scene.cu) / scene.fu * z, (v - scene.cv) / scene.fv * z, z);
    x *= 1.0 + opt.range_noise * rng.normal() / x.norm();
    const Eigen::Vector4d velo = rect_to_velo * x.homogeneous();
    // float32 storage, so in-memory and on-disk clouds agree exactly
    f.cloud.points.push_back(velo.head<3>().cast<float>().cast<double>());
    f.cloud.reflectance.push_back(0.5);
  }
  return f;
}

// Writes image.png, cloud.bin, calib.txt and gt.png into `dir`.
inline void write_frame_files(const FrameData& f, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "image.png", write_rgb_png(f.image));
  write_file_atomic(dir / "cloud.bin", write_point_cloud(f.cloud));
  write_file_atomic(dir / "calib.txt", write_calibration(f.calib));
  if (f.gt) write_file_atomic(dir / "gt.png", write_depth_png(*f.gt));
}

}  // namespace crfdepth
