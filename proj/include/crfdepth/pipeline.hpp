#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crfdepth/crf.hpp"
#include "crfdepth/error.hpp"
#include "crfdepth/geometry.hpp"
#include "crfdepth/io.hpp"
#include "crfdepth/metrics.hpp"
#include "crfdepth/random.hpp"
#include "crfdepth/render.hpp"
#include "crfdepth/solver.hpp"
#include "crfdepth/superpixel.hpp"
#include "crfdepth/synthetic.hpp"

namespace crfdepth {

inline constexpr const char* kDataRootEnv = "CRFDEPTH_DATA_ROOT";

struct FrameBundle {
  std::filesystem::path image;
  std::filesystem::path cloud;
  std::vector<std::filesystem::path> calib;
  std::optional<std::filesystem::path> gt;
  std::string frame_id;
  std::string projection_key = "P_rect_02";
};

struct PipelineOptions {
  std::uint64_t seed = 0;
  bool oracle = false;  // cross-check the depth solve against dense_solve
};

struct CompletionResult {
  SuperpixelSegmentation seg;
  FourNeighborGraph graph;
  NormalCloud normals;
  std::vector<ProjectedPoint> points;
  SuperpixelObservations obs;
  EnergySystem system;
  DenseDepthMap depth;
  UncertaintyMap uncertainty;
  std::optional<double> oracle_rel_diff;
};

// Resolves a relative path against $CRFDEPTH_DATA_ROOT when it does not
// exist as given.
inline std::filesystem::path resolve_data_path(const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
    auto candidate = std::filesystem::path(root) / p;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return p;
}

inline FrameData load_frame(const FrameBundle& b) {
  FrameData f;
  f.frame_id = b.frame_id.empty() ? resolve_data_path(b.image).stem().string() : b.frame_id;
  f.image = read_rgb_png(read_file_bytes(resolve_data_path(b.image)));
  f.cloud = read_point_cloud(read_file_bytes(resolve_data_path(b.cloud)));
  std::vector<std::filesystem::path> calib;
  for (const auto& c : b.calib) calib.push_back(resolve_data_path(c));
  if (calib.empty()) throw ValidationError("pipeline", "no calibration file given");
  f.calib = load_calibration(calib, b.projection_key);
  if (b.gt) {
    f.gt = read_depth_png(read_file_bytes(resolve_data_path(*b.gt)));
    if (f.gt->width != f.image.width || f.gt->height != f.image.height) {
      throw ValidationError("pipeline", "ground truth size differs from the image");
    }
  }
  return f;
}

// Keeps round(fraction * n) points chosen uniformly with a seeded
// generator; fraction 1 returns the cloud unchanged. Order is preserved.
inline RawPointCloud subsample_cloud(const RawPointCloud& cloud, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("pipeline", "subsample fraction must lie in (0, 1]");
  }
  if (fraction == 1.0) return cloud;
  Rng rng(seed);
  const auto keep = sample_without_replacement(
      cloud.size(), static_cast<std::size_t>(std::lround(fraction * static_cast<double>(cloud.size()))), rng);
  RawPointCloud out;
  for (auto i : keep) {
    out.points.push_back(cloud.points[i]);
    if (i < cloud.reflectance.size()) out.reflectance.push_back(cloud.reflectance[i]);
  }
  return out;
}

namespace detail {

// Dense direct solve over the nodes that take part in the energy.
inline double oracle_difference(const EnergySystem& sys, const DenseDepthMap& depth) {
  std::vector<int> active;
  for (int i = 0; i < sys.n; ++i) {
    if (depth.node_valid[static_cast<std::size_t>(i)]) active.push_back(i);
  }
  if (active.size() > static_cast<std::size_t>(kDenseSolveMaxSize)) {
    throw ValidationError("pipeline", "--oracle needs a system with at most 2000 active nodes");
  }
  const auto m = active.size();
  std::vector<int> pos(static_cast<std::size_t>(sys.n), -1);
  for (std::size_t k = 0; k < m; ++k) pos[static_cast<std::size_t>(active[k])] = static_cast<int>(k);
  std::vector<double> dense(m * m, 0.0);
  Vector rhs(m);
  for (const auto& t : sys.A.triplets()) {
    const int a = pos[static_cast<std::size_t>(t.row)], b = pos[static_cast<std::size_t>(t.col)];
    if (a >= 0 && b >= 0) dense[static_cast<std::size_t>(a) * m + static_cast<std::size_t>(b)] = t.value;
  }
  for (std::size_t k = 0; k < m; ++k) rhs[k] = sys.b[static_cast<std::size_t>(active[k])];
  const auto ref = dense_solve(std::move(dense), rhs);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double d = depth.x[static_cast<std::size_t>(active[k])] - ref[k];
    num += d * d;
    den += ref[k] * ref[k];
  }
  return std::sqrt(num / den);
}

}  // namespace detail

// Normals -> SLIC -> 4-neighbour graph -> projection -> aggregation ->
// potentials -> solve -> paint.
inline CompletionResult complete(const FrameData& frame, const RunConfig& cfg,
                                 const PipelineOptions& opt = {}) {
  validate_config(cfg);
  const auto cloud = subsample_cloud(frame.cloud, cfg.subsample_fraction, opt.seed);

  CompletionResult res;
  res.normals = estimate_normals(cloud, cfg.normal_k);
  res.seg = slic_segment(frame.image, cfg.n_superpixels, cfg.compactness);
  res.graph = build_four_neighbor_graph(res.seg);
  res.points = project_points(cloud, frame.calib, frame.image.width, frame.image.height, &res.normals);
  res.obs = aggregate(res.seg, res.points);
  res.system = build_system(res.obs, res.graph, cfg);
  res.depth = infer(res.system, res.seg, cfg);
  res.uncertainty = infer_uncertainty(res.obs, res.graph, res.seg, cfg);

  if (opt.oracle) {
    res.oracle_rel_diff = detail::oracle_difference(res.system, res.depth);
    const double bound = std::max(1e-6, 10.0 * cfg.solver_tol);
    if (*res.oracle_rel_diff > bound) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "iterative and dense solutions differ by %.3g (bound %.3g)",
                    *res.oracle_rel_diff, bound);
      throw NumericalError("solver", buf);
    }
  }
  return res;
}

struct OutputPaths {
  std::filesystem::path depth, uncertainty, preview;
};

inline OutputPaths write_completion(const CompletionResult& res, const RunConfig& cfg,
                                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  OutputPaths p{out_dir / "depth.png", out_dir / "uncertainty.png", out_dir / "preview.png"};
  write_file_atomic(p.depth, write_depth_png(res.depth.map));
  write_file_atomic(p.uncertainty,
                    write_gray8_png(res.uncertainty.width, res.uncertainty.height, uncertainty_bytes(res.uncertainty)));
  write_file_atomic(p.preview, write_rgb_png(depth_preview(res.depth.map, cfg.depth_cap)));
  return p;
}

inline CompletionResult run_complete(const FrameBundle& bundle, const RunConfig& cfg,
                                     const PipelineOptions& opt, const std::filesystem::path& out_dir) {
  const auto frame = load_frame(bundle);
  auto res = complete(frame, cfg, opt);
  write_completion(res, cfg, out_dir);
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRecord {
  std::string value;
  EvalResult result;
};

struct SweepSpec {
  std::string param;  // n_superpixels | subsample_fraction | potential_set
  std::vector<SweepRecord> records;
};

inline std::string sweep_csv(const SweepSpec& s) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : s.records) out += format_csv_row(s.param, r.value, r.result) + "\n";
  return out;
}

namespace detail {

inline const DepthImage& require_gt(const FrameData& f) {
  if (!f.gt) throw ValidationError("pipeline", "sweeps need a ground-truth depth image");
  return *f.gt;
}

template <typename T>
void require_strictly_monotone(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw ValidationError("pipeline", std::string(what) + ": no sweep values given");
  if (v.size() < 2) return;
  const bool up = v[1] > v[0];
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (up ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1])) {
      throw ValidationError("pipeline", std::string(what) + " must be strictly monotone");
    }
  }
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

inline SweepSpec run_superpixel_sweep(const FrameData& frame, const RunConfig& cfg, const std::vector<int>& counts,
                                      const PipelineOptions& opt = {}, const EvalOptions& eval = {}) {
  const auto& gt = detail::require_gt(frame);
  detail::require_strictly_monotone(counts, "superpixel counts");
  SweepSpec s{"n_superpixels", {}};
  for (int n : counts) {
    RunConfig c = cfg;
    c.n_superpixels = n;
    const auto res = complete(frame, c, opt);
    s.records.push_back({std::to_string(n), evaluate(res.depth.map, gt, eval)});
  }
  return s;
}

inline SweepSpec run_subsample_sweep(const FrameData& frame, const RunConfig& cfg,
                                     const std::vector<double>& fractions, const PipelineOptions& opt = {},
                                     const EvalOptions& eval = {}) {
  const auto& gt = detail::require_gt(frame);
  detail::require_strictly_monotone(fractions, "subsample fractions");
  SweepSpec s{"subsample_fraction", {}};
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("pipeline", "subsample fractions must lie in (0, 1]");
    RunConfig c = cfg;
    c.subsample_fraction = f;
    const auto res = complete(frame, c, opt);
    s.records.push_back({detail::format_value(f), evaluate(res.depth.map, gt, eval)});
  }
  return s;
}

// I: colour pairwise only; II: + surface normals; III: + depth.
inline SweepSpec run_ablation(const FrameData& frame, const RunConfig& cfg, const PipelineOptions& opt = {},
                              const EvalOptions& eval = {}) {
  const auto& gt = detail::require_gt(frame);
  SweepSpec s{"potential_set", {}};
  const std::array<std::pair<const char*, std::array<double, 3>>, 3> sets = {{
      {"I", {cfg.beta, 0.0, 0.0}},
      {"II", {cfg.beta, cfg.gamma, 0.0}},
      {"III", {cfg.beta, cfg.gamma, cfg.delta}},
  }};
  for (const auto& [name, w] : sets) {
    RunConfig c = cfg;
    c.beta = w[0];
    c.gamma = w[1];
    c.delta = w[2];
    const auto res = complete(frame, c, opt);
    s.records.push_back({name, evaluate(res.depth.map, gt, eval)});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dense point cloud export
// ---------------------------------------------------------------------------

// Back-projects every valid pixel (c, r) through the left 3x3 block of
// P_rect into the rectified camera frame; one `x y z r g b` line per pixel.
inline std::string export_point_cloud(const DepthImage& depth, const CalibrationSet& calib,
                                      const RgbImage& image) {
  if (image.width != depth.width || image.height != depth.height) {
    throw ValidationError("pipeline", "image and depth map sizes differ");
  }
  const Eigen::Matrix3d m = calib.p_rect.leftCols<3>();
  const Eigen::Vector3d t = calib.p_rect.col(3);
  const Eigen::Matrix3d minv = m.inverse();
  std::string out;
  char buf[160];
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const auto p = static_cast<std::size_t>(r) * depth.width + c;
      if (!depth.valid[p]) continue;
      const double d = depth.depth[p];
      const Eigen::Vector3d x = minv * (Eigen::Vector3d(c * d, r * d, d) - t);
      const auto i = image.index(c, r);
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d %d %d\n", x.x(), x.y(), x.z(), image.pixels[i],
                    image.pixels[i + 1], image.pixels[i + 2]);
      out += buf;
    }
  }
  return out;
}

}  // namespace crfdepth
