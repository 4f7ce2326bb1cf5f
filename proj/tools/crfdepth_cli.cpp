#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "crfdepth/baseline.hpp"
#include "crfdepth/pipeline.hpp"

namespace fs = std::filesystem;
using namespace crfdepth;

namespace {

struct GlobalFlags {
  std::string config;
  std::uint64_t seed = 0;
  bool oracle = false;
  std::string out = ".";
  std::string projection_key = "P_rect_02";
};

struct FrameFlags {
  std::string image, cloud, gt, frame_id;
  std::vector<std::string> calib;
};

struct EvalFlags {
  std::string rel_denominator = "pred";
  std::vector<int> crop;
  double scale = 1.0;
};

void add_frame_flags(CLI::App* cmd, FrameFlags& f, bool need_gt) {
  cmd->add_option("--image", f.image, "RGB image (PNG)")->required();
  cmd->add_option("--cloud", f.cloud, "LiDAR scan (float32 x y z r records)")->required();
  cmd->add_option("--calib", f.calib, "calibration file(s); repeat or list several")->required();
  auto* gt = cmd->add_option("--gt", f.gt, "ground-truth depth PNG");
  if (need_gt) gt->required();
  cmd->add_option("--frame-id", f.frame_id, "name used in messages (default: image file stem)");
}

void add_eval_flags(CLI::App* cmd, EvalFlags& e) {
  cmd->add_option("--rel-denominator", e.rel_denominator, "REL denominator")
      ->check(CLI::IsMember({"pred", "gt"}));
  cmd->add_option("--crop", e.crop, "evaluation crop x,y,width,height")->delimiter(',')->expected(4);
  cmd->add_option("--scale", e.scale, "multiply RMSE and MAE by this factor (1000 for mm)");
}

FrameBundle make_bundle(const FrameFlags& f, const GlobalFlags& g) {
  FrameBundle b;
  b.image = f.image;
  b.cloud = f.cloud;
  for (const auto& c : f.calib) b.calib.emplace_back(c);
  if (!f.gt.empty()) b.gt = fs::path(f.gt);
  b.frame_id = f.frame_id;
  b.projection_key = g.projection_key;
  return b;
}

EvalOptions make_eval_options(const EvalFlags& e, const RunConfig& cfg) {
  EvalOptions o;
  o.cap = cfg.depth_cap;
  o.rel_denominator = e.rel_denominator == "gt" ? RelDenominator::kGroundTruth : RelDenominator::kPrediction;
  if (e.crop.size() == 4) o.crop = CropRect{e.crop[0], e.crop[1], e.crop[2], e.crop[3]};
  return o;
}

RunConfig load_run_config(const GlobalFlags& g) {
  if (g.config.empty()) return RunConfig{};
  return load_config(read_text_file(resolve_data_path(g.config)));
}

std::string frame_name(const FrameFlags& f) {
  if (!f.frame_id.empty()) return f.frame_id;
  if (!f.image.empty()) return fs::path(f.image).stem().string();
  return "-";
}

void emit_sweep(const SweepSpec& s, const EvalFlags& e, const fs::path& path) {
  SweepSpec scaled = s;
  for (auto& r : scaled.records) r.result = unit_scale(r.result, e.scale);
  const auto csv = sweep_csv(scaled);
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  write_file_atomic(path, csv);
  std::cout << csv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth completion of sparse LiDAR guided by an RGB image"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "run configuration (key = value lines)");
  app.add_option("--seed", g.seed, "seed for point subsampling");
  app.add_flag("--oracle", g.oracle, "cross-check the sparse solve against a dense solve (<= 2000 nodes)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--projection-key", g.projection_key, "calibration key of the 3x4 projection matrix");

  FrameFlags frame;
  EvalFlags evalf;
  std::string error_frame = "-";

  // project ------------------------------------------------------------------
  auto* project = app.add_subcommand("project", "project a LiDAR scan into the image");
  project->add_option("--image", frame.image, "RGB image; only its size is used")->required();
  project->add_option("--cloud", frame.cloud, "LiDAR scan")->required();
  project->add_option("--calib", frame.calib, "calibration file(s)")->required();
  project->add_option("--frame-id", frame.frame_id, "name used in messages");

  // segment ------------------------------------------------------------------
  auto* segment = app.add_subcommand("segment", "SLIC superpixels and the 4-neighbour graph");
  segment->add_option("--image", frame.image, "RGB image")->required();
  std::optional<int> seg_count;
  segment->add_option("--superpixels", seg_count, "superpixel count (overrides the config)");
  segment->add_option("--frame-id", frame.frame_id, "name used in messages");

  // complete -----------------------------------------------------------------
  auto* complete_cmd = app.add_subcommand("complete", "dense depth and uncertainty for one frame");
  add_frame_flags(complete_cmd, frame, false);
  add_eval_flags(complete_cmd, evalf);
  bool dump_system = false;
  complete_cmd->add_flag("--dump-system", dump_system, "also write A.txt and b.txt as triplets");

  // eval ---------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "compare a depth PNG against ground truth");
  std::string pred_path, gt_path;
  eval->add_option("--pred", pred_path, "predicted depth PNG")->required();
  eval->add_option("--gt", gt_path, "ground-truth depth PNG")->required();
  add_eval_flags(eval, evalf);

  // sweeps -------------------------------------------------------------------
  auto* sweep_sp = app.add_subcommand("sweep-superpixels", "RMSE over superpixel counts");
  add_frame_flags(sweep_sp, frame, true);
  add_eval_flags(sweep_sp, evalf);
  std::vector<int> counts{1200, 2400, 5500};
  sweep_sp->add_option("--values", counts, "superpixel counts")->delimiter(',');

  auto* sweep_sub = app.add_subcommand("sweep-subsample", "RMSE over LiDAR subsampling fractions");
  add_frame_flags(sweep_sub, frame, true);
  add_eval_flags(sweep_sub, evalf);
  std::vector<double> fractions{0.1, 0.4, 1.0};
  sweep_sub->add_option("--values", fractions, "fractions in (0, 1]")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "RMSE for colour, +normal and +depth pairwise sets");
  add_frame_flags(ablate, frame, true);
  add_eval_flags(ablate, evalf);

  // export-cloud -------------------------------------------------------------
  auto* export_cmd = app.add_subcommand("export-cloud", "back-project a dense depth map to x y z r g b text");
  std::string depth_path;
  export_cmd->add_option("--depth", depth_path, "depth PNG")->required();
  export_cmd->add_option("--image", frame.image, "RGB image for point colours")->required();
  export_cmd->add_option("--calib", frame.calib, "calibration file(s)")->required();
  export_cmd->add_option("--frame-id", frame.frame_id, "name used in messages");

  // make-fixture -------------------------------------------------------------
  auto* fixture = app.add_subcommand("make-fixture", "write the synthetic street-scene frame");
  SyntheticOptions synth;
  fixture->add_option("--width", synth.width, "image width");
  fixture->add_option("--height", synth.height, "image height");
  fixture->add_option("--sample-fraction", synth.sample_fraction, "share of pixels with a LiDAR return");
  fixture->add_option("--fixture-seed", synth.seed, "scene noise seed");

  CLI11_PARSE(app, argc, argv);

  try {
    error_frame = frame_name(frame);
    if (eval->parsed()) error_frame = fs::path(pred_path).stem().string();
    if (fixture->parsed()) error_frame = "synthetic";

    const RunConfig cfg = load_run_config(g);
    validate_config(cfg);
    const PipelineOptions popt{g.seed, g.oracle};
    const fs::path out(g.out);

    if (project->parsed()) {
      const auto image = read_rgb_png(read_file_bytes(resolve_data_path(frame.image)));
      const auto cloud = read_point_cloud(read_file_bytes(resolve_data_path(frame.cloud)));
      std::vector<fs::path> calib;
      for (const auto& c : frame.calib) calib.push_back(resolve_data_path(c));
      const auto points = project_points(cloud, load_calibration(calib, g.projection_key), image.width, image.height);
      std::string text;
      char buf[128];
      DepthImage sparse(image.width, image.height);
      for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %zu\n", p.u, p.v, p.depth, p.source_index);
        text += buf;
        const auto i = static_cast<std::size_t>(p.row()) * image.width + p.col();
        if (!sparse.valid[i] || p.depth < sparse.depth[i]) sparse.set(i, p.depth);
      }
      fs::create_directories(out);
      write_file_atomic(out / "points.txt", text);
      write_file_atomic(out / "sparse_depth.png", write_depth_png(sparse));
      std::printf("projected %zu of %zu points\n", points.size(), cloud.size());
    } else if (segment->parsed()) {
      const auto image = read_rgb_png(read_file_bytes(resolve_data_path(frame.image)));
      const auto seg = slic_segment(image, seg_count.value_or(cfg.n_superpixels), cfg.compactness);
      const auto graph = build_four_neighbor_graph(seg);
      fs::create_directories(out);
      write_file_atomic(out / "labels.png", write_gray16_png(seg.width, seg.height, label_samples(seg)));
      write_file_atomic(out / "overlay.png", write_rgb_png(segmentation_overlay(image, seg, graph)));
      std::string edges;
      for (const auto& [i, j] : graph.edges) edges += std::to_string(i) + " " + std::to_string(j) + "\n";
      write_file_atomic(out / "graph.txt", edges);
      std::printf("segments=%d edges=%zu\n", seg.n_segments, graph.edges.size());
    } else if (complete_cmd->parsed()) {
      const auto data = load_frame(make_bundle(frame, g));
      error_frame = data.frame_id;
      const auto res = complete(data, cfg, popt);
      write_completion(res, cfg, out);
      if (dump_system) {
        write_file_atomic(out / "A.txt", write_triplets(res.system.A));
        write_file_atomic(out / "b.txt", write_triplets(res.system.b));
      }
      std::printf("frame=%s segments=%d edges=%zu observed=%zu iterations=%d residual=%.3e\n", data.frame_id.c_str(),
                  res.seg.n_segments, res.graph.edges.size(), res.obs.observed_count(), res.depth.report.iterations,
                  res.depth.report.final_residual_norm);
      if (res.oracle_rel_diff) std::printf("oracle_rel_diff=%.3e\n", *res.oracle_rel_diff);
      if (data.gt) {
        const auto r = evaluate(res.depth.map, *data.gt, make_eval_options(evalf, cfg));
        std::printf("%s\n", format_record(unit_scale(r, evalf.scale)).c_str());
      }
    } else if (eval->parsed()) {
      const auto pred = read_depth_png(read_file_bytes(resolve_data_path(pred_path)));
      const auto gt = read_depth_png(read_file_bytes(resolve_data_path(gt_path)));
      const auto r = evaluate(pred, gt, make_eval_options(evalf, cfg));
      std::printf("%s\n", format_record(unit_scale(r, evalf.scale)).c_str());
    } else if (sweep_sp->parsed()) {
      const auto data = load_frame(make_bundle(frame, g));
      error_frame = data.frame_id;
      emit_sweep(run_superpixel_sweep(data, cfg, counts, popt, make_eval_options(evalf, cfg)), evalf,
                 out / "sweep_superpixels.csv");
    } else if (sweep_sub->parsed()) {
      const auto data = load_frame(make_bundle(frame, g));
      error_frame = data.frame_id;
      emit_sweep(run_subsample_sweep(data, cfg, fractions, popt, make_eval_options(evalf, cfg)), evalf,
                 out / "sweep_subsample.csv");
    } else if (ablate->parsed()) {
      const auto data = load_frame(make_bundle(frame, g));
      error_frame = data.frame_id;
      emit_sweep(run_ablation(data, cfg, popt, make_eval_options(evalf, cfg)), evalf, out / "ablation.csv");
    } else if (export_cmd->parsed()) {
      const auto depth = read_depth_png(read_file_bytes(resolve_data_path(depth_path)));
      const auto image = read_rgb_png(read_file_bytes(resolve_data_path(frame.image)));
      std::vector<fs::path> calib;
      for (const auto& c : frame.calib) calib.push_back(resolve_data_path(c));
      const auto text = export_point_cloud(depth, load_calibration(calib, g.projection_key), image);
      fs::create_directories(out);
      write_file_atomic(out / "cloud.txt", text);
    } else if (fixture->parsed()) {
      const auto data = make_synthetic_frame(synth);
      write_frame_files(data, out);
      const auto points = project_points(data.cloud, data.calib, data.image.width, data.image.height);
      const auto nn = nearest_neighbor_fill(data.image.width, data.image.height, points);
      write_file_atomic(out / "nn_baseline.png", write_depth_png(nn));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "frame %s: %s: %s\n", error_frame.c_str(), e.module().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "frame %s: cli: %s\n", error_frame.c_str(), e.what());
    return 1;
  }
  return 0;
}
