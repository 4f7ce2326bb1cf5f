#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "crfdepth/error.hpp"
#include "crfdepth/geometry.hpp"
#include "crfdepth/io.hpp"
#include "crfdepth/solver.hpp"
#include "crfdepth/superpixel.hpp"

namespace crfdepth {

using Color = std::array<double, 3>;

struct SuperpixelObservations {
  std::vector<std::optional<double>> observed_depth;  // median of member depths
  std::vector<int> point_count;
  std::vector<std::optional<Eigen::Vector3d>> location;  // mean camera-frame position
  std::vector<std::optional<Eigen::Vector3d>> normal;    // normalized mean normal
  std::vector<Color> mean_color;

  std::size_t size() const { return point_count.size(); }
  std::size_t observed_count() const {
    return static_cast<std::size_t>(std::count_if(point_count.begin(), point_count.end(),
                                                  [](int c) { return c > 0; }));
  }
};

struct EnergySystem {
  int n = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0;
  std::vector<std::pair<int, int>> edges;
  std::vector<double> colour_w, normal_w, depth_w;  // per edge, in [0, 1]
  Vector w_diag;  // W(i, i): sigma_i on observed nodes, 0 elsewhere
  SparseMatrix S, P, D;  // one row per edge: +sqrt(w) at i, -sqrt(w) at j
  SparseMatrix A;
  Vector b;
  Vector z;  // observed depths, 0 where unobserved

  bool observed(int i) const { return w_diag[static_cast<std::size_t>(i)] != 0.0; }
};

struct DenseDepthMap {
  DepthImage map;
  Vector x;                            // per-superpixel solution
  std::vector<std::uint8_t> node_valid;  // 0 for decoupled unobserved nodes
  SolveReport report;
};

struct UncertaintyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // per pixel, [0, 1]
  Vector x;                    // per superpixel
  Vector targets;
  SolveReport report;
};

// Median of member depths; even counts average the two middle values.
inline double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

inline SuperpixelObservations aggregate(const SuperpixelSegmentation& seg,
                                        const std::vector<ProjectedPoint>& points) {
  const auto n = static_cast<std::size_t>(seg.n_segments);
  std::vector<std::vector<double>> depths(n);
  std::vector<Eigen::Vector3d> pos_sum(n, Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> nrm_sum(n, Eigen::Vector3d::Zero());
  std::vector<int> nrm_count(n, 0);
  for (const auto& p : points) {
    const int c = p.col(), r = p.row();
    if (c < 0 || r < 0 || c >= seg.width || r >= seg.height) {
      throw ValidationError("crf", "projected point outside the image");
    }
    const auto l = static_cast<std::size_t>(seg.label(c, r));
    depths[l].push_back(p.depth);
    pos_sum[l] += p.position;
    if (p.normal) {
      nrm_sum[l] += *p.normal;
      ++nrm_count[l];
    }
  }

  SuperpixelObservations obs;
  obs.observed_depth.resize(n);
  obs.point_count.resize(n);
  obs.location.resize(n);
  obs.normal.resize(n);
  obs.mean_color = seg.mean_color;
  for (std::size_t l = 0; l < n; ++l) {
    const auto count = depths[l].size();
    obs.point_count[l] = static_cast<int>(count);
    if (count == 0) continue;
    obs.location[l] = pos_sum[l] / static_cast<double>(count);
    obs.observed_depth[l] = median(std::move(depths[l]));
    const double len = nrm_sum[l].norm();
    if (nrm_count[l] > 0 && len > 1e-9 * nrm_count[l]) obs.normal[l] = nrm_sum[l] / len;
  }
  return obs;
}

inline double colour_weight(const Color& ci, const Color& cj, double sigma_d) {
  if (!(sigma_d > 0.0)) throw ValidationError("crf", "sigma_d must be > 0");
  double d2 = 0.0;
  for (std::size_t k = 0; k < 3; ++k) d2 += (ci[k] - cj[k]) * (ci[k] - cj[k]);
  return std::exp(-d2 / (sigma_d * sigma_d));
}

// Cosine similarity clamped to [0, 1]; a missing normal gives 0.
inline double normal_weight(const std::optional<Eigen::Vector3d>& ni,
                            const std::optional<Eigen::Vector3d>& nj) {
  if (!ni || !nj) return 0.0;
  const double c = ni->dot(*nj) / (ni->norm() * nj->norm());
  return std::clamp(c, 0.0, 1.0);
}

// Distance-aware Potts weight; a missing location gives 0.
inline double depth_weight(const std::optional<Eigen::Vector3d>& pi,
                           const std::optional<Eigen::Vector3d>& pj, double sigma_p) {
  if (!(sigma_p > 0.0)) throw ValidationError("crf", "sigma_p must be > 0");
  if (!pi || !pj) return 0.0;
  return std::exp(-(*pi - *pj).squaredNorm() / (sigma_p * sigma_p));
}

namespace detail {

inline SparseMatrix incidence(int n, const std::vector<std::pair<int, int>>& edges,
                              const std::vector<double>& w) {
  std::vector<Triplet> t;
  t.reserve(edges.size() * 2);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double s = std::sqrt(w[e]);
    t.push_back({static_cast<int>(e), edges[e].first, s});
    t.push_back({static_cast<int>(e), edges[e].second, -s});
  }
  return from_triplets(static_cast<int>(edges.size()), n, std::move(t));
}

}  // namespace detail

// A = a WtW + b StS + g PtP + d DtD, b = a WtW z. A is accumulated edge by
// edge; S, P and D are kept for inspection.
inline EnergySystem build_system(const SuperpixelObservations& obs, const FourNeighborGraph& graph,
                                 const RunConfig& cfg) {
  if (static_cast<std::size_t>(graph.n_nodes) != obs.size()) {
    throw ValidationError("crf", "graph node count does not match observations");
  }
  if (!(cfg.alpha > 0.0)) throw ValidationError("crf", "alpha must be > 0");
  if (obs.observed_count() == 0) {
    throw SingularSystemError("crf", "no superpixel carries a LiDAR observation; refusing to solve");
  }

  EnergySystem sys;
  sys.n = graph.n_nodes;
  sys.alpha = cfg.alpha;
  sys.beta = cfg.beta;
  sys.gamma = cfg.gamma;
  sys.delta = cfg.delta;
  sys.edges = graph.edges;
  const auto n = static_cast<std::size_t>(sys.n);
  const auto m = sys.edges.size();

  sys.colour_w.resize(m);
  sys.normal_w.resize(m);
  sys.depth_w.resize(m);
  for (std::size_t e = 0; e < m; ++e) {
    const auto i = static_cast<std::size_t>(sys.edges[e].first);
    const auto j = static_cast<std::size_t>(sys.edges[e].second);
    sys.colour_w[e] = colour_weight(obs.mean_color[i], obs.mean_color[j], cfg.sigma_d);
    sys.normal_w[e] = normal_weight(obs.normal[i], obs.normal[j]);
    sys.depth_w[e] = depth_weight(obs.location[i], obs.location[j], cfg.sigma_p);
  }
  sys.S = detail::incidence(sys.n, sys.edges, sys.colour_w);
  sys.P = detail::incidence(sys.n, sys.edges, sys.normal_w);
  sys.D = detail::incidence(sys.n, sys.edges, sys.depth_w);

  sys.w_diag.assign(n, 0.0);
  sys.z.assign(n, 0.0);
  sys.b.assign(n, 0.0);
  std::vector<Triplet> t;
  t.reserve(n + 4 * m);
  for (std::size_t i = 0; i < n; ++i) {
    if (!obs.observed_depth[i]) continue;
    sys.w_diag[i] = cfg.sigma_i;
    sys.z[i] = *obs.observed_depth[i];
    const double wtw = cfg.sigma_i * cfg.sigma_i;
    t.push_back({static_cast<int>(i), static_cast<int>(i), cfg.alpha * wtw});
    sys.b[i] = cfg.alpha * wtw * sys.z[i];
  }
  for (std::size_t e = 0; e < m; ++e) {
    const double w = cfg.beta * sys.colour_w[e] + cfg.gamma * sys.normal_w[e] + cfg.delta * sys.depth_w[e];
    if (w == 0.0) continue;
    const int i = sys.edges[e].first, j = sys.edges[e].second;
    t.push_back({i, i, w});
    t.push_back({j, j, w});
    t.push_back({i, j, -w});
    t.push_back({j, i, -w});
  }
  sys.A = from_triplets(sys.n, sys.n, std::move(t));
  return sys;
}

// 1.0 without points, 0.5 with one, min(1/count, 0.25) otherwise.
inline Vector build_uncertainty_targets(const SuperpixelObservations& obs) {
  Vector unc(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int c = obs.point_count[i];
    unc[i] = c == 0 ? 1.0 : c == 1 ? 0.5 : std::min(1.0 / c, 0.25);
  }
  return unc;
}

namespace detail {

// Label components over edges whose combined weight is positive.
inline std::vector<int> weighted_components(int n, const std::vector<std::pair<int, int>>& edges,
                                            const std::vector<double>& weight) {
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (!(weight[e] > 0.0)) continue;
    const int a = find(edges[e].first), b = find(edges[e].second);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
  std::vector<int> root(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) root[static_cast<std::size_t>(i)] = find(i);
  return root;
}

inline SolverOptions solver_options(const RunConfig& cfg) {
  return {cfg.solver_tol, cfg.solver_max_iter, cfg.solver, cfg.preconditioner};
}

inline void require_converged(const SolveReport& rep, const char* what) {
  if (rep.numerical_error) {
    throw NumericalError("solver", std::string(what) + ": NaN or Inf encountered during the solve");
  }
  if (!rep.converged) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: no convergence after %d iterations (residual %.6g)", what,
                  rep.iterations, rep.final_residual_norm);
    throw ConvergenceError("solver", buf, rep.iterations, rep.final_residual_norm);
  }
}

}  // namespace detail

inline constexpr double kMinDepth = 1.0 / kDepthScale;

// Every component of the positive-weight edge graph needs an observed node.
// An unobserved node without any positive-weight edge does not enter the
// energy at all; it is left out and painted invalid. Returns per-node
// validity.
inline std::vector<std::uint8_t> check_anchored(const EnergySystem& sys) {
  std::vector<double> w(sys.edges.size());
  std::vector<int> degree(static_cast<std::size_t>(sys.n), 0);
  for (std::size_t e = 0; e < w.size(); ++e) {
    w[e] = sys.beta * sys.colour_w[e] + sys.gamma * sys.normal_w[e] + sys.delta * sys.depth_w[e];
    if (w[e] > 0.0) {
      ++degree[static_cast<std::size_t>(sys.edges[e].first)];
      ++degree[static_cast<std::size_t>(sys.edges[e].second)];
    }
  }
  const auto root = detail::weighted_components(sys.n, sys.edges, w);
  std::vector<std::uint8_t> anchored(static_cast<std::size_t>(sys.n), 0);
  for (int i = 0; i < sys.n; ++i) {
    if (sys.observed(i)) anchored[static_cast<std::size_t>(root[static_cast<std::size_t>(i)])] = 1;
  }
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(sys.n), 1);
  for (int i = 0; i < sys.n; ++i) {
    if (anchored[static_cast<std::size_t>(root[static_cast<std::size_t>(i)])]) continue;
    if (degree[static_cast<std::size_t>(i)] == 0) {
      valid[static_cast<std::size_t>(i)] = 0;
      continue;
    }
    throw SingularSystemError("crf",
                              "superpixel " + std::to_string(i) +
                                  " lies in a connected component without any LiDAR observation",
                              i);
  }
  return valid;
}

inline DepthImage paint(const SuperpixelSegmentation& seg, const Vector& x,
                        const std::vector<std::uint8_t>& node_valid, double lo, double hi) {
  DepthImage img(seg.width, seg.height);
  for (std::size_t p = 0; p < img.size(); ++p) {
    const auto l = static_cast<std::size_t>(seg.labels[p]);
    if (!node_valid[l]) continue;
    img.depth[p] = std::clamp(x[l], lo, hi);
    img.valid[p] = 1;
  }
  return img;
}

inline DenseDepthMap infer(const EnergySystem& sys, const SuperpixelSegmentation& seg,
                           const RunConfig& cfg) {
  if (seg.n_segments != sys.n) throw ValidationError("crf", "segmentation does not match the system");
  DenseDepthMap out;
  out.node_valid = check_anchored(sys);

  double mean = 0.0;
  int n_obs = 0;
  for (int i = 0; i < sys.n; ++i) {
    if (sys.observed(i)) {
      mean += sys.z[static_cast<std::size_t>(i)];
      ++n_obs;
    }
  }
  mean /= n_obs;
  Vector x0(static_cast<std::size_t>(sys.n));
  for (int i = 0; i < sys.n; ++i) x0[static_cast<std::size_t>(i)] = sys.observed(i) ? sys.z[static_cast<std::size_t>(i)] : mean;

  out.report = solve(sys.A, sys.b, x0, detail::solver_options(cfg));
  detail::require_converged(out.report, "depth solve");
  out.x = out.report.x;
  out.map = paint(seg, out.x, out.node_valid, kMinDepth, cfg.depth_cap);
  return out;
}

// Solves (a s_i^2 I + b StS) x = a s_i^2 unc, i.e. the count-based targets
// smoothed with the colour operator; painted and clamped to [0, 1].
inline UncertaintyMap infer_uncertainty(const SuperpixelObservations& obs, const FourNeighborGraph& graph,
                                        const SuperpixelSegmentation& seg, const RunConfig& cfg) {
  if (static_cast<std::size_t>(graph.n_nodes) != obs.size() || seg.n_segments != graph.n_nodes) {
    throw ValidationError("crf", "graph, segmentation and observations disagree on node count");
  }
  if (!(cfg.alpha > 0.0)) throw ValidationError("crf", "alpha must be > 0");
  const int n = graph.n_nodes;
  UncertaintyMap out;
  out.targets = build_uncertainty_targets(obs);

  const double wtw = cfg.alpha * cfg.sigma_i * cfg.sigma_i;
  std::vector<Triplet> t;
  Vector b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    t.push_back({i, i, wtw});
    b[static_cast<std::size_t>(i)] = wtw * out.targets[static_cast<std::size_t>(i)];
  }
  for (const auto& [i, j] : graph.edges) {
    const double w = cfg.beta * colour_weight(obs.mean_color[static_cast<std::size_t>(i)],
                                              obs.mean_color[static_cast<std::size_t>(j)], cfg.sigma_d);
    if (w == 0.0) continue;
    t.push_back({i, i, w});
    t.push_back({j, j, w});
    t.push_back({i, j, -w});
    t.push_back({j, i, -w});
  }
  const auto a = from_triplets(n, n, std::move(t));
  out.report = solve(a, b, out.targets, detail::solver_options(cfg));
  detail::require_converged(out.report, "uncertainty solve");
  out.x = out.report.x;

  out.width = seg.width;
  out.height = seg.height;
  out.values.resize(seg.labels.size());
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    out.values[p] = std::clamp(out.x[static_cast<std::size_t>(seg.labels[p])], 0.0, 1.0);
  }
  return out;
}

}  // namespace crfdepth
