// Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//
//   acceptance [--report-only]
//
// Exit status is 1 when any criterion fails, unless --report-only is given.
// Criterion 10 runs only when $CRFDEPTH_DATA_ROOT holds a KITTI frame list
// (see README.md, "KITTI check").

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "../support/instances.hpp"
#include "crfdepth/baseline.hpp"
#include "crfdepth/pipeline.hpp"

using namespace crfdepth;
namespace fs = std::filesystem;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::kPass : Verdict::kFail, std::move(detail)}; }

// The bundled fixture and the configuration every fixture criterion uses:
// declared defaults except the superpixel count fixed by criterion 6.
const FrameData& fixture() {
  static const FrameData f = make_synthetic_frame();
  return f;
}

RunConfig fixture_config() {
  RunConfig c;
  c.n_superpixels = 800;
  return c;
}

SparseMatrix random_spd(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.push_back({i, i, 0.05 + u(gen)});
  for (int e = 0; e < 3 * n; ++e) {
    const int i = static_cast<int>(gen() % static_cast<std::uint64_t>(n));
    const int j = static_cast<int>(gen() % static_cast<std::uint64_t>(n));
    if (i == j) continue;
    const double w = u(gen);
    t.insert(t.end(), {{i, i, w}, {j, j, w}, {i, j, -w}, {j, i, -w}});
  }
  return from_triplets(n, n, std::move(t));
}

double rel_norm_diff(const Vector& a, const Vector& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

// --------------------------------------------------------------------------

Outcome energy_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(1001);
  std::normal_distribution<double> g(20.0, 15.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto in = crfdepth::testing::random_instance(gen, 100);
    const auto sys = build_system(in.obs, in.graph, in.cfg);
    Vector x(static_cast<std::size_t>(sys.n));
    for (auto& v : x) v = g(gen);
    const double direct = crfdepth::testing::direct_energy(in, x);
    const double quad = crfdepth::testing::quadratic_form_energy(sys, x);
    worst = std::max(worst, std::abs(direct - quad) / std::max(std::abs(direct), 1e-300));
  }
  const double t = seconds_since(t0);
  return verdict(worst < 1e-10 && t < 5.0, fmt("max rel err %.3e over 200 instances, %.2f s", worst, t));
}

Outcome solver_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(2002);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const double tol = 1e-10;
  double worst = 0.0;
  int residual_violations = 0, unconverged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 199);
    const auto a = random_spd(n, gen);
    Vector b(static_cast<std::size_t>(n));
    for (auto& v : b) v = u(gen);
    const auto rep = cgs_solve(a, b, Vector(b.size(), 0.0), tol, 20000);
    const auto ref = dense_solve(a, b);
    worst = std::max(worst, rel_norm_diff(rep.x, ref));
    if (!rep.converged) {
      ++unconverged;
      continue;
    }
    const auto ax = spmv(a, rep.x);
    double r = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      r += (b[i] - ax[i]) * (b[i] - ax[i]);
      bn += b[i] * b[i];
    }
    if (std::sqrt(r) > tol * std::sqrt(bn)) ++residual_violations;
  }
  const double t = seconds_since(t0);
  return verdict(worst < 1e-6 && residual_violations == 0 && unconverged == 0 && t < 10.0,
                 fmt("max rel diff %.3e, %d residual violations, %d unconverged, %.2f s", worst,
                     residual_violations, unconverged, t));
}

Outcome unary_fidelity() {
  auto cfg = fixture_config();
  cfg.beta = cfg.gamma = cfg.delta = 0.0;
  const auto t0 = Clock::now();
  const auto res = complete(fixture(), cfg);
  const double t = seconds_since(t0);
  double worst = 0.0;
  for (int i = 0; i < res.system.n; ++i) {
    const auto& z = res.obs.observed_depth[static_cast<std::size_t>(i)];
    if (z) worst = std::max(worst, std::abs(res.depth.x[static_cast<std::size_t>(i)] - *z));
  }
  return verdict(worst < 1e-9 && t < 1.0,
                 fmt("max |x - median| %.3e on %zu observed superpixels, %.2f s", worst, res.obs.observed_count(), t));
}

Outcome scale_invariance() {
  std::mt19937_64 gen(4004);
  double worst = 0.0;
  double tol = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto in = crfdepth::testing::random_instance(gen, 100);
    in.cfg.alpha *= 0.1;
    in.cfg.beta *= 0.1;
    in.cfg.gamma *= 0.1;
    in.cfg.delta *= 0.1;
    tol = in.cfg.solver_tol;
    const auto x1 = infer(build_system(in.obs, in.graph, in.cfg), in.seg, in.cfg).x;
    auto scaled = in.cfg;
    scaled.alpha *= 10;
    scaled.beta *= 10;
    scaled.gamma *= 10;
    scaled.delta *= 10;
    const auto x2 = infer(build_system(in.obs, in.graph, scaled), in.seg, scaled).x;
    worst = std::max(worst, rel_norm_diff(x2, x1));
  }
  return verdict(worst < 10 * tol, fmt("max relative change %.3e (bound %.1e)", worst, 10 * tol));
}

Outcome smoothness_propagation() {
  crfdepth::testing::Instance in;
  in.seg = crfdepth::testing::strip_segmentation(3);
  in.graph.n_nodes = 3;
  in.graph.slots.assign(3, {-1, -1, -1, -1});
  in.graph.edges = {{0, 1}, {1, 2}};
  in.obs.observed_depth = {std::nullopt, 10.0, std::nullopt};
  in.obs.point_count = {0, 1, 0};
  in.obs.location.resize(3);
  in.obs.normal.resize(3);
  in.obs.mean_color.assign(3, {50, 60, 70});  // identical colours: pairwise weight 1
  in.cfg.beta = 1.0;
  in.cfg.gamma = in.cfg.delta = 0.0;
  const auto sys = build_system(in.obs, in.graph, in.cfg);
  const auto x = infer(sys, in.seg, in.cfg).x;
  double worst = 0.0;
  for (double v : x) worst = std::max(worst, std::abs(v - 10.0));
  return verdict(worst <= in.cfg.solver_tol,
                 fmt("x = (%.12g, %.12g, %.12g), max deviation %.3e", x[0], x[1], x[2], worst));
}

Outcome fixture_quality() {
  const auto& f = fixture();
  const auto t0 = Clock::now();
  const auto res = complete(f, fixture_config());
  const double t = seconds_since(t0);
  const auto ours = evaluate(res.depth.map, *f.gt);
  const auto nn = nearest_neighbor_fill(f.image.width, f.image.height,
                                        project_points(f.cloud, f.calib, f.image.width, f.image.height));
  const auto base = evaluate(nn, *f.gt);
  const double gain = 1.0 - ours.rmse / base.rmse;
  return verdict(gain >= 0.30 && t < 30.0,
                 fmt("RMSE %.4f m vs nearest-neighbour %.4f m, improvement %.1f%% (need >= 30%%), %.2f s", ours.rmse,
                     base.rmse, 100 * gain, t));
}

std::string rmse_list(const SweepSpec& s) {
  std::string out;
  for (const auto& r : s.records) out += (out.empty() ? "" : ", ") + r.value + ": " + fmt("%.4f", r.result.rmse);
  return out;
}

bool non_increasing(const SweepSpec& s) {
  for (std::size_t i = 1; i < s.records.size(); ++i) {
    if (s.records[i].result.rmse > s.records[i - 1].result.rmse) return false;
  }
  return true;
}

Outcome superpixel_trend() {
  const auto s = run_superpixel_sweep(fixture(), fixture_config(), {300, 800, 1600});
  return verdict(non_increasing(s), "RMSE " + rmse_list(s));
}

Outcome ablation_trend() {
  const auto s = run_ablation(fixture(), fixture_config());
  return verdict(non_increasing(s), "RMSE " + rmse_list(s));
}

Outcome subsample_trend() {
  const auto s = run_subsample_sweep(fixture(), fixture_config(), {0.1, 0.4, 1.0});
  return verdict(non_increasing(s), "RMSE " + rmse_list(s));
}

// Frame list: one frame per line, whitespace separated, paths relative to
// $CRFDEPTH_DATA_ROOT:
//   image.png velodyne.bin calib_cam_to_cam.txt calib_velo_to_cam.txt groundtruth.png
Outcome kitti_rmse() {
  const char* root = std::getenv(kDataRootEnv);
  if (root == nullptr || *root == '\0') return {Verdict::kSkip, fmt("%s not set", kDataRootEnv)};
  fs::path list = fs::path(root) / "kitti_frames.txt";
  if (const char* l = std::getenv("CRFDEPTH_KITTI_FRAMES"); l != nullptr && *l != '\0') list = l;
  if (!fs::exists(list)) return {Verdict::kSkip, "no frame list at " + list.string()};

  std::ifstream in(list);
  std::string line;
  std::vector<std::array<std::string, 5>> frames;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::array<std::string, 5> f;
    if (line.empty() || line[0] == '#') continue;
    if (ls >> f[0] >> f[1] >> f[2] >> f[3] >> f[4]) frames.push_back(f);
  }
  if (frames.size() < 100) return {Verdict::kSkip, fmt("frame list has %zu frames, need >= 100", frames.size())};

  const RunConfig cfg;  // 5500 superpixels, all potentials
  double sum = 0.0;
  for (const auto& f : frames) {
    FrameBundle b;
    b.image = fs::path(root) / f[0];
    b.cloud = fs::path(root) / f[1];
    b.calib = {fs::path(root) / f[2], fs::path(root) / f[3]};
    b.gt = fs::path(root) / f[4];
    const auto frame = load_frame(b);
    const auto res = complete(frame, cfg);
    sum += unit_scale(evaluate(res.depth.map, *frame.gt), 1000.0).rmse;
  }
  const double mean = sum / static_cast<double>(frames.size());
  const double target = 849.39;
  return verdict(std::abs(mean - target) <= 0.15 * target,
                 fmt("mean RMSE %.2f mm over %zu frames (target %.2f +- 15%%)", mean, frames.size(), target));
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "crfdepth_acceptance_determinism";
  fs::remove_all(dir);
  write_frame_files(fixture(), dir / "frame");
  FrameBundle b{dir / "frame" / "image.png", dir / "frame" / "cloud.bin", {dir / "frame" / "calib.txt"},
                dir / "frame" / "gt.png", "fixture", "P_rect_02"};
  auto cfg = fixture_config();
  cfg.subsample_fraction = 0.5;  // exercises the seeded sampler
  for (const char* run : {"a", "b"}) {
    run_complete(b, cfg, {17, false}, dir / run);
    write_file_atomic(dir / run / "sweep.csv", sweep_csv(run_subsample_sweep(load_frame(b), cfg, {0.25, 0.5}, {17, false})));
  }
  std::string mismatched;
  for (const char* file : {"depth.png", "uncertainty.png", "preview.png", "sweep.csv"}) {
    if (read_file_bytes(dir / "a" / file) != read_file_bytes(dir / "b" / file)) mismatched += std::string(" ") + file;
  }
  fs::remove_all(dir);
  return verdict(mismatched.empty(), mismatched.empty() ? "depth, uncertainty, preview PNGs and sweep CSV identical"
                                                        : "differs:" + mismatched);
}

Outcome slic_contract() {
  std::string detail;
  bool ok = true;
  for (auto [k, edge] : {std::pair{100, 50}, std::pair{100, 37}, std::pair{2, 50}}) {
    RgbImage img(100, 100);
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 100; ++c) {
        const auto i = img.index(c, r);
        img.pixels[i] = c < edge ? 40 : 210;
        img.pixels[i + 1] = c < edge ? 90 : 200;
        img.pixels[i + 2] = c < edge ? 160 : 60;
      }
    const auto seg = slic_segment(img, k, 10.0);
    // partition and connectivity
    bool connected = true;
    std::vector<int> seen(seg.labels.size(), 0), comps(static_cast<std::size_t>(seg.n_segments), 0);
    for (std::size_t s = 0; s < seen.size(); ++s) {
      if (seen[s]) continue;
      ++comps[static_cast<std::size_t>(seg.labels[s])];
      std::vector<std::size_t> stack{s};
      seen[s] = 1;
      while (!stack.empty()) {
        const auto p = stack.back();
        stack.pop_back();
        const int r = static_cast<int>(p / 100), c = static_cast<int>(p % 100);
        for (auto [dc, dr] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int cc = c + dc, rr = r + dr;
          if (cc < 0 || rr < 0 || cc >= 100 || rr >= 100) continue;
          const auto q = static_cast<std::size_t>(rr * 100 + cc);
          if (!seen[q] && seg.labels[q] == seg.labels[p]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    for (int cnt : comps) connected = connected && cnt == 1;
    const bool count_ok = seg.n_segments >= k / 2 && seg.n_segments <= 2 * k;
    // boundary: pixels whose tone differs from their segment's majority tone
    // must sit within 1 px of the tone edge
    std::vector<int> left(static_cast<std::size_t>(seg.n_segments), 0);
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 100; ++c) left[static_cast<std::size_t>(seg.label(c, r))] += c < edge;
    double worst = 0.0;
    for (int r = 0; r < 100; ++r)
      for (int c = 0; c < 100; ++c) {
        const int l = seg.label(c, r);
        const bool majority_left = 2 * left[static_cast<std::size_t>(l)] > seg.pixel_count[static_cast<std::size_t>(l)];
        if ((c < edge) != majority_left) worst = std::max(worst, std::abs(c + 0.5 - edge));
      }
    const bool case_ok = connected && count_ok && worst <= 1.0;
    ok = ok && case_ok;
    detail += fmt("%sk=%d edge=%d: %d segments, %s, boundary offset %.1f px", detail.empty() ? "" : "; ", k, edge,
                  seg.n_segments, connected ? "connected" : "NOT connected", worst);
  }
  return verdict(ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
  const bool report_only = argc > 1 && std::strcmp(argv[1], "--report-only") == 0;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"energy-assembly identity", energy_identity},
      {"solver oracle equivalence", solver_oracle},
      {"unary-only fidelity", unary_fidelity},
      {"argmin scale invariance", scale_invariance},
      {"smoothness propagation", smoothness_propagation},
      {"synthetic scene quality vs nearest neighbour", fixture_quality},
      {"trend: superpixel count", superpixel_trend},
      {"trend: potential ablation", ablation_trend},
      {"trend: subsampling", subsample_trend},
      {"KITTI mean RMSE", kitti_rmse},
      {"determinism", determinism},
      {"SLIC contract", slic_contract},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const Error& e) {
      o = {Verdict::kFail, std::string("error in ") + e.module() + ": " + e.what()};
    } catch (const std::exception& e) {
      o = {Verdict::kFail, std::string("error: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::kFail;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, tag, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failing criteria\n", failures);
  return report_only || failures == 0 ? 0 : 1;
}
