#pragma once

// Random CRF instances for property checks, plus a direct term-by-term
// evaluation of the energy that does not go through the assembled A and b.

#include <algorithm>
#include <random>
#include <set>

#include "crfdepth/crf.hpp"

namespace crfdepth::testing {

struct Instance {
  SuperpixelObservations obs;
  FourNeighborGraph graph;
  SuperpixelSegmentation seg;  // one pixel per node, in a single row
  RunConfig cfg;
};

inline SuperpixelSegmentation strip_segmentation(int n) {
  SuperpixelSegmentation seg;
  seg.width = n;
  seg.height = 1;
  seg.n_segments = n;
  seg.labels.resize(static_cast<std::size_t>(n));
  std::iota(seg.labels.begin(), seg.labels.end(), 0);
  seg.pixel_count.assign(static_cast<std::size_t>(n), 1);
  seg.centroids.resize(static_cast<std::size_t>(n));
  seg.mean_color.assign(static_cast<std::size_t>(n), {0, 0, 0});
  for (int i = 0; i < n; ++i) seg.centroids[static_cast<std::size_t>(i)] = {0.0, static_cast<double>(i)};
  return seg;
}

// A connected random graph (spanning path plus extra edges) with random
// colours, normals, locations and observations; node 0 is always observed.
inline Instance random_instance(std::mt19937_64& gen, int max_nodes = 100) {
  std::uniform_int_distribution<int> size(2, max_nodes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Instance in;
  const int n = size(gen);
  in.seg = strip_segmentation(n);
  in.graph.n_nodes = n;
  in.graph.slots.assign(static_cast<std::size_t>(n), {-1, -1, -1, -1});
  std::set<std::pair<int, int>> edges;
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  for (int i = 1; i < n; ++i) {
    const int j = static_cast<int>(gen() % static_cast<std::uint64_t>(i));
    parent[static_cast<std::size_t>(i)] = j;
    edges.insert({j, i});
  }
  const int extra = static_cast<int>(gen() % static_cast<std::uint64_t>(n + 1));
  for (int k = 0; k < extra; ++k) {
    const int a = static_cast<int>(gen() % static_cast<std::uint64_t>(n));
    const int b = static_cast<int>(gen() % static_cast<std::uint64_t>(n));
    if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
  }
  in.graph.edges.assign(edges.begin(), edges.end());

  const auto un = static_cast<std::size_t>(n);
  in.obs.observed_depth.resize(un);
  in.obs.point_count.assign(un, 0);
  in.obs.location.resize(un);
  in.obs.normal.resize(un);
  in.obs.mean_color.resize(un);
  in.cfg.sigma_d = 10 + 60 * u(gen);
  // Colours walk along the spanning tree so that tree neighbours look alike,
  // as adjacent superpixels of one surface do; extra edges may still join
  // very different colours.
  std::normal_distribution<double> step(0.0, 0.5 * in.cfg.sigma_d);
  in.obs.mean_color[0] = {255 * u(gen), 255 * u(gen), 255 * u(gen)};
  for (std::size_t i = 1; i < un; ++i) {
    const auto& from = in.obs.mean_color[static_cast<std::size_t>(parent[i])];
    for (std::size_t k = 0; k < 3; ++k) in.obs.mean_color[i][k] = std::clamp(from[k] + step(gen), 0.0, 255.0);
  }
  const double p_obs = 0.2 + 0.7 * u(gen);
  for (std::size_t i = 0; i < un; ++i) {
    if (i == 0 || u(gen) < p_obs) {
      const double d = 2.0 + 60.0 * u(gen);
      in.obs.observed_depth[i] = d;
      in.obs.point_count[i] = 1 + static_cast<int>(gen() % 12);
      in.obs.location[i] = Eigen::Vector3d(g(gen) * 3, g(gen), d);
      if (u(gen) < 0.8) in.obs.normal[i] = Eigen::Vector3d(g(gen), g(gen), g(gen)).normalized();
    }
  }
  in.seg.mean_color = in.obs.mean_color;

  in.cfg.alpha = 0.05 + 0.95 * u(gen);
  in.cfg.beta = 0.05 + 0.95 * u(gen);
  in.cfg.gamma = u(gen);
  in.cfg.delta = u(gen);
  in.cfg.sigma_p = 0.5 + 5 * u(gen);
  in.cfg.sigma_i = 0.3 + 2 * u(gen);
  in.cfg.depth_cap = 1000.0;
  return in;
}

// E(x) summed term by term from the observations, with every weight
// recomputed from its defining formula.
inline double direct_energy(const Instance& in, const Vector& x) {
  const auto& c = in.cfg;
  double unary = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!in.obs.observed_depth[i]) continue;
    const double r = x[i] - *in.obs.observed_depth[i];
    unary += c.sigma_i * c.sigma_i * r * r;
  }
  double colour = 0.0, normal = 0.0, depth = 0.0;
  for (const auto& [i, j] : in.graph.edges) {
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
    const double d2 = (x[a] - x[b]) * (x[a] - x[b]);
    double dc = 0.0;
    for (std::size_t k = 0; k < 3; ++k) dc += std::pow(in.obs.mean_color[a][k] - in.obs.mean_color[b][k], 2);
    colour += std::exp(-dc / (c.sigma_d * c.sigma_d)) * d2;
    if (in.obs.normal[a] && in.obs.normal[b]) {
      const double cosine = in.obs.normal[a]->dot(*in.obs.normal[b]);
      normal += (cosine > 0 ? std::min(cosine, 1.0) : 0.0) * d2;
    }
    if (in.obs.location[a] && in.obs.location[b]) {
      depth += std::exp(-(*in.obs.location[a] - *in.obs.location[b]).squaredNorm() / (c.sigma_p * c.sigma_p)) * d2;
    }
  }
  return c.alpha * unary + c.beta * colour + c.gamma * normal + c.delta * depth;
}

// x^T A x - 2 b^T x + alpha * sum sigma_i^2 z_i^2
inline double quadratic_form_energy(const EnergySystem& sys, const Vector& x) {
  const auto ax = spmv(sys.A, x);
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e += x[i] * ax[i] - 2.0 * sys.b[i] * x[i] + sys.alpha * sys.w_diag[i] * sys.w_diag[i] * sys.z[i] * sys.z[i];
  }
  return e;
}

}  // namespace crfdepth::testing
