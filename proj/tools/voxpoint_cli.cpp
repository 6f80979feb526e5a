#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "voxpoint/bench.hpp"
#include "voxpoint/errors.hpp"
#include "voxpoint/io.hpp"
#include "voxpoint/parallel.hpp"
#include "voxpoint/pipeline.hpp"
#include "voxpoint/synthetic.hpp"
#include "voxpoint/weights_io.hpp"

namespace fs = std::filesystem;
using namespace voxpoint;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;

struct GridFlags {
  std::vector<double> range_min{0.0, -40.0, -3.0};
  std::vector<double> range_max{70.4, 40.0, 1.0};
  std::vector<double> voxel_size{0.05, 0.05, 0.1};

  void add(CLI::App* app) {
    app->add_option("--range-min", range_min, "Lower corner of the point-cloud range (x y z)")
        ->expected(3)
        ->capture_default_str();
    app->add_option("--range-max", range_max, "Upper corner of the point-cloud range (x y z)")
        ->expected(3)
        ->capture_default_str();
    app->add_option("--voxel-size", voxel_size, "Voxel edge lengths at stride 1 (x y z)")
        ->expected(3)
        ->capture_default_str();
  }
  GridSpec spec() const {
    return GridSpec({range_min[0], range_min[1], range_min[2]}, {range_max[0], range_max[1], range_max[2]},
                    {voxel_size[0], voxel_size[1], voxel_size[2]});
  }
};

struct SceneFlags {
  std::string input;
  std::string labels;
  std::string calib;

  void add(CLI::App* app) {
    app->add_option("-i,--input", input, "Scene file (.json scene or KITTI .bin scan)")->required();
    app->add_option("--labels", labels, "KITTI label file for a .bin scan (needs --calib)");
    app->add_option("--calib", calib, "KITTI calibration file used with --labels");
  }
  Scene load() const {
    const fs::path path(input);
    if (path.extension() == ".bin") {
      Scene scene;
      scene.cloud = read_kitti_bin(path);
      scene.frame_id = path.stem().string();
      scene.source = "kitti";
      if (!labels.empty()) {
        if (calib.empty()) throw ArgumentError("--labels requires --calib");
        scene.gt_boxes = read_kitti_labels(labels, read_kitti_calib(calib));
      }
      return scene;
    }
    std::vector<std::string> warnings;
    Scene scene = read_scene_json(path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << path.string() << ": " << w << "\n";
    return scene;
  }
};

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

ScoreSource parse_score_source(const std::string& s) {
  if (s == "oracle") return ScoreSource::kOracle;
  if (s == "scene") return ScoreSource::kScene;
  if (s == "mlp") return ScoreSource::kMlp;
  throw ArgumentError("unknown score source '" + s + "'");
}

// Scores aligned with `cloud` (already cropped from `scene`).
std::vector<double> scores_for(const Scene& scene, const PointCloud& cloud, const GridSpec& grid,
                               const std::string& source, double sigma, std::uint64_t seed) {
  if (source == "scene") {
    if (!scene.scores) throw ArgumentError("scene carries no scores");
    std::vector<double> out;
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      if (grid.contains(scene.cloud.xyz(i))) out.push_back((*scene.scores)[i]);
    }
    return out;
  }
  if (source != "oracle") throw ArgumentError("score source must be 'oracle' or 'scene'");
  return score_provider(cloud, OracleScoreMode{label_foreground(cloud, scene.gt_boxes), sigma, seed}).scores;
}

Box3D parse_box(const nlohmann::json& j, const std::string& where) {
  try {
    Box3D b;
    const auto& c = j.at("center");
    const auto& s = j.at("size");
    if (!c.is_array() || c.size() != 3 || !s.is_array() || s.size() != 3) {
      throw SchemaError(where + ": center and size must be arrays of three numbers");
    }
    b.cx = c[0].get<double>();
    b.cy = c[1].get<double>();
    b.cz = c[2].get<double>();
    b.l = s[0].get<double>();
    b.w = s[1].get<double>();
    b.h = s[2].get<double>();
    b.yaw = normalize_yaw(j.at("yaw").get<double>());
    const auto cls = parse_class(j.value("class", std::string("Car")));
    if (!cls) throw SchemaError(where + "/class: unknown class");
    b.cls = *cls;
    if (!b.valid()) throw SchemaError(where + ": box dimensions must be positive and finite");
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

struct PipelineFlags {
  GridFlags grid;
  std::string score_source = "oracle";
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double gamma = 1.0;
  std::size_t input_points = 16384;
  std::vector<std::size_t> counts{4096, 2048, 1024, 256};
  int query_range = 4;
  std::size_t max_samples = 16;
  int manhattan = 4;
  double raw_radius = 0.8;
  std::size_t raw_max_samples = 16;
  double nms_pre = 0.7;
  std::size_t nms_pre_top = 100;
  double nms_post = 0.1;
  std::size_t nms_post_top = 100;
  bool no_reweight = false;
  std::string weights;
  std::uint64_t weights_seed = 0;
  std::string save_weights;

  void add(CLI::App* app) {
    grid.add(app);
    app->add_option("--score-source", score_source, "oracle, scene or mlp")
        ->check(CLI::IsMember({"oracle", "scene", "mlp"}))
        ->capture_default_str();
    app->add_option("--sigma", sigma, "Gaussian noise on oracle scores")->capture_default_str();
    app->add_option("--seed", seed, "Seed for subsetting and score noise")->capture_default_str();
    app->add_option("--gamma", gamma, "S-FPS rectification strength")->capture_default_str();
    app->add_option("--input-points", input_points, "Points fed to the sampling chain")->capture_default_str();
    app->add_option("--counts", counts, "Keypoints kept by each of the four layers")->expected(4)->capture_default_str();
    app->add_option("--query-range", query_range, "Voxel query half-width I")->capture_default_str();
    app->add_option("--max-samples", max_samples, "Neighbors kept per voxel query")->capture_default_str();
    app->add_option("--manhattan", manhattan, "Manhattan threshold of the voxel query")->capture_default_str();
    app->add_option("--raw-radius", raw_radius, "Radius of the raw-point branch (m)")->capture_default_str();
    app->add_option("--raw-max-samples", raw_max_samples, "Neighbors kept by the raw-point branch")
        ->capture_default_str();
    app->add_option("--nms-pre", nms_pre, "IoU threshold of the proposal NMS")->capture_default_str();
    app->add_option("--nms-pre-top", nms_pre_top, "Proposals kept after the first NMS")->capture_default_str();
    app->add_option("--nms-post", nms_post, "IoU threshold of the final NMS")->capture_default_str();
    app->add_option("--nms-post-top", nms_post_top, "Detections kept after the final NMS")->capture_default_str();
    app->add_flag("--no-reweight", no_reweight, "Do not scale keypoint features by their scores");
    app->add_option("--weights", weights, "Weight file; synthetic weights are generated when absent");
    app->add_option("--weights-seed", weights_seed, "Seed for synthetic weights")->capture_default_str();
    app->add_option("--save-weights", save_weights, "Write the weights in use to this file");
  }

  PipelineConfig config() const {
    PipelineConfig cfg;
    cfg.grid = grid.spec();
    cfg.score_source = parse_score_source(score_source);
    cfg.oracle_sigma = sigma;
    cfg.seed = seed;
    cfg.sampling.gamma = gamma;
    cfg.sampling.input_points = input_points;
    for (std::size_t k = 0; k < 4; ++k) cfg.sampling.counts[k] = counts[k];
    cfg.query.range = query_range;
    cfg.query.max_samples = max_samples;
    cfg.query.manhattan_threshold = manhattan;
    cfg.raw_radius = raw_radius;
    cfg.raw_max_samples = raw_max_samples;
    cfg.nms_pre_threshold = nms_pre;
    cfg.nms_pre_top = nms_pre_top;
    cfg.nms_post_threshold = nms_post;
    cfg.nms_post_top = nms_post_top;
    cfg.reweight_keypoints = !no_reweight;
    cfg.validate();
    return cfg;
  }

  PipelineWeights load_weights(const PipelineConfig& cfg, std::size_t feat_dim) const {
    PipelineWeights w = weights.empty() ? synthetic_weights(cfg, feat_dim, weights_seed)
                                        : PipelineWeights::from_bundle(read_weights(weights));
    if (!save_weights.empty()) write_weights(save_weights, w.to_bundle());
    return w;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voxel/point keypoint detection toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file supplying option values")->envname("VOXPOINT_CONFIG");
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  // gen-scenes
  auto* gen = app.add_subcommand("gen-scenes", "Write seeded synthetic scenes");
  std::string gen_dir;
  std::size_t gen_count = 1;
  std::uint64_t gen_seed = 0;
  std::string gen_format = "json";
  SceneGenConfig gen_cfg;
  gen->add_option("-o,--out-dir", gen_dir, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenes")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Seed of the first scene; scene k uses seed + k")->capture_default_str();
  gen->add_option("--format", gen_format, "json, bin or both")
      ->check(CLI::IsMember({"json", "bin", "both"}))
      ->capture_default_str();
  gen->add_option("--points", gen_cfg.num_points, "Points per scene")->capture_default_str();
  gen->add_option("--fg-fraction", gen_cfg.fg_fraction, "Share of points inside objects")->capture_default_str();
  gen->add_option("--objects", gen_cfg.num_objects, "Objects per scene")->capture_default_str();
  gen->add_option("--x-min", gen_cfg.x_min, "Scene extent start along x")->capture_default_str();
  gen->add_option("--x-extent", gen_cfg.x_extent, "Scene extent along x")->capture_default_str();
  gen->add_option("--y-min", gen_cfg.y_min, "Scene extent start along y")->capture_default_str();
  gen->add_option("--y-extent", gen_cfg.y_extent, "Scene extent along y")->capture_default_str();
  gen->add_option("--ground-z", gen_cfg.ground_z, "Ground height")->capture_default_str();
  gen->add_option("--clutter", gen_cfg.clutter_fraction, "Share of background points above ground")
      ->capture_default_str();

  // voxelize
  auto* vox = app.add_subcommand("voxelize", "Mean-encode a scene into sparse voxels (CSV)");
  SceneFlags vox_scene;
  GridFlags vox_grid;
  int vox_stride = 1;
  std::string vox_out;
  vox_scene.add(vox);
  vox_grid.add(vox);
  vox->add_option("--stride", vox_stride, "Voxel stride")->check(CLI::PositiveNumber)->capture_default_str();
  vox->add_option("-o,--out", vox_out, "CSV output (stdout when absent)");

  // sample
  auto* smp = app.add_subcommand("sample", "Select keypoints with FPS, S-FPS or Top-K (CSV)");
  SceneFlags smp_scene;
  GridFlags smp_grid;
  std::string smp_sampler = "sfps";
  std::size_t smp_count = 1024;
  double smp_gamma = 1.0;
  std::string smp_source = "oracle";
  double smp_sigma = 0.0;
  std::uint64_t smp_seed = 0;
  std::string smp_out;
  smp_scene.add(smp);
  smp_grid.add(smp);
  smp->add_option("--sampler", smp_sampler, "fps, sfps or topk")
      ->check(CLI::IsMember({"fps", "sfps", "topk"}))
      ->capture_default_str();
  smp->add_option("--count", smp_count, "Keypoints to select")->capture_default_str();
  smp->add_option("--gamma", smp_gamma, "S-FPS rectification strength")->capture_default_str();
  smp->add_option("--score-source", smp_source, "oracle or scene")
      ->check(CLI::IsMember({"oracle", "scene"}))
      ->capture_default_str();
  smp->add_option("--sigma", smp_sigma, "Gaussian noise on oracle scores")->capture_default_str();
  smp->add_option("--seed", smp_seed, "Seed for score noise")->capture_default_str();
  smp->add_option("-o,--out", smp_out, "CSV output (stdout when absent)");

  // query-bench
  auto* qb = app.add_subcommand("query-bench", "Time ball and voxel queries per sampler (CSV)");
  std::vector<std::string> qb_inputs;
  std::size_t qb_synthetic = 0;
  SceneGenConfig qb_gen;
  GridFlags qb_grid;
  BenchConfig qb_cfg;
  std::string qb_out;
  qb->add_option("-i,--input", qb_inputs, "Scene files");
  qb->add_option("--synthetic", qb_synthetic, "Generate this many synthetic scenes instead")->capture_default_str();
  qb->add_option("--points", qb_gen.num_points, "Points per synthetic scene")->capture_default_str();
  qb->add_option("--fg-fraction", qb_gen.fg_fraction, "Foreground share of synthetic scenes")->capture_default_str();
  qb->add_option("--x-extent", qb_gen.x_extent, "Synthetic scene extent along x")->capture_default_str();
  qb_grid.add(qb);
  qb->add_option("--stride", qb_cfg.stride, "Voxel stride")->capture_default_str();
  qb->add_option("--query-range", qb_cfg.query.range, "Voxel query half-width I")->capture_default_str();
  qb->add_option("--max-samples", qb_cfg.query.max_samples, "Neighbors kept per query")->capture_default_str();
  qb->add_option("--manhattan", qb_cfg.query.manhattan_threshold, "Manhattan threshold")->capture_default_str();
  qb->add_option("--radius", qb_cfg.query.ball_radius, "Ball query radius (m)")->capture_default_str();
  qb->add_option("--keypoints", qb_cfg.keypoints, "Keypoints per scene")->capture_default_str();
  qb->add_option("--gammas", qb_cfg.gammas, "S-FPS gammas to compare")->capture_default_str();
  qb->add_option("--repetitions", qb_cfg.repetitions, "Timed query runs")->capture_default_str();
  qb->add_option("--sample-repetitions", qb_cfg.sample_repetitions, "Timed sampling runs")->capture_default_str();
  qb->add_option("--sigma", qb_cfg.oracle_sigma, "Gaussian noise on oracle scores")->capture_default_str();
  qb->add_option("--seed", qb_cfg.seed, "Seed for scenes and score noise")->capture_default_str();
  qb->add_option("-o,--out", qb_out, "CSV output (stdout when absent)");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Compute assembled keypoint features (CSV)");
  SceneFlags agg_scene;
  PipelineFlags agg_flags;
  std::string agg_out;
  agg_scene.add(agg);
  agg_flags.add(agg);
  agg->add_option("-o,--out", agg_out, "CSV output (stdout when absent)");

  // nms
  auto* nm = app.add_subcommand("nms", "Rotated-BEV non-maximum suppression over a proposal file (JSON)");
  std::string nms_input;
  double nms_threshold = 0.1;
  std::size_t nms_top = 100;
  std::string nms_out;
  nm->add_option("-i,--input", nms_input,
                 "JSON {\"proposals\": [{\"center\", \"size\", \"yaw\", \"class\", \"score\"}]}")
      ->required();
  nm->add_option("--threshold", nms_threshold, "Suppress when IoU exceeds this")->capture_default_str();
  nm->add_option("--top", nms_top, "Maximum boxes kept")->capture_default_str();
  nm->add_option("-o,--out", nms_out, "JSON output (stdout when absent)");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run the full detection pipeline (JSON)");
  SceneFlags pipe_scene;
  PipelineFlags pipe_flags;
  std::string pipe_out;
  std::string pipe_timings;
  pipe_scene.add(pipe);
  pipe_flags.add(pipe);
  pipe->add_option("-o,--out", pipe_out, "Detections JSON (stdout when absent)");
  pipe->add_option("--timings", pipe_timings, "Per-stage timing JSON");

  // CLI11 skips a config file named only by the environment when it is missing.
  if (const char* env = std::getenv("VOXPOINT_CONFIG"); env != nullptr && *env != '\0' && !fs::exists(env)) {
    std::cerr << "error: VOXPOINT_CONFIG names " << env << ", which does not exist\n";
    return kExitInvalid;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    set_num_threads(threads);

    if (gen->parsed()) {
      fs::create_directories(gen_dir);
      for (std::size_t k = 0; k < gen_count; ++k) {
        const Scene scene = generate_scene(gen_cfg, gen_seed + k);
        char name[32];
        std::snprintf(name, sizeof name, "scene-%04zu", k);
        const fs::path base = fs::path(gen_dir) / name;
        if (gen_format != "bin") write_scene_json(base.string() + ".json", scene);
        if (gen_format != "json") write_kitti_bin(base.string() + ".bin", scene.cloud);
      }
    } else if (vox->parsed()) {
      const Scene scene = vox_scene.load();
      const GridSpec grid = vox_grid.spec();
      const SparseVoxelMap map = voxelize_mean(crop_to_range(scene.cloud, grid), grid, vox_stride);
      std::string csv = "i,j,k,count";
      for (std::size_t c = 0; c < map.feat_dim(); ++c) csv += ",f" + std::to_string(c);
      csv += "\r\n";
      for (std::size_t v = 0; v < map.size(); ++v) {
        const VoxelCoord c = map.coord(v);
        csv += std::to_string(c.i) + "," + std::to_string(c.j) + "," + std::to_string(c.k) + "," +
               std::to_string(map.point_count(v));
        for (double f : map.feature(v)) csv += "," + fmt(f);
        csv += "\r\n";
      }
      emit(vox_out, csv);
    } else if (smp->parsed()) {
      const Scene scene = smp_scene.load();
      const GridSpec grid = smp_grid.spec();
      const PointCloud cloud = crop_to_range(scene.cloud, grid);
      const auto scores = scores_for(scene, cloud, grid, smp_source, smp_sigma, smp_seed);
      const auto labels = label_foreground(cloud, scene.gt_boxes);
      const std::size_t m = std::min(smp_count, cloud.size());
      std::vector<std::size_t> picks;
      if (smp_sampler == "fps") picks = fps(cloud.positions(), m);
      else if (smp_sampler == "topk") picks = topk(scores, m);
      else picks = sfps(cloud.positions(), scores, m, smp_gamma);
      std::string csv = "order,index,x,y,z,score,label\r\n";
      for (std::size_t r = 0; r < picks.size(); ++r) {
        const std::size_t i = picks[r];
        const Vec3 p = cloud.xyz(i);
        csv += std::to_string(r) + "," + std::to_string(i) + "," + fmt(p.x) + "," + fmt(p.y) + "," + fmt(p.z) + "," +
               fmt(scores[i]) + "," + std::to_string(labels[i]) + "\r\n";
      }
      emit(smp_out, csv);
    } else if (qb->parsed()) {
      qb_cfg.grid = qb_grid.spec();
      std::vector<Scene> scenes;
      for (const auto& path : qb_inputs) {
        SceneFlags f;
        f.input = path;
        scenes.push_back(f.load());
      }
      for (std::size_t k = 0; k < qb_synthetic; ++k) scenes.push_back(generate_scene(qb_gen, qb_cfg.seed + k));
      if (scenes.empty()) throw ArgumentError("query-bench needs --input files or --synthetic N");
      emit(qb_out, run_benchmark(scenes, qb_cfg).to_csv());
    } else if (agg->parsed()) {
      const Scene scene = agg_scene.load();
      const PipelineConfig cfg = agg_flags.config();
      const auto weights = agg_flags.load_weights(cfg, scene.cloud.feat_dim());
      const auto result = run_pipeline(scene, weights, cfg);
      std::string csv = "x,y,z,score";
      for (std::size_t c = 0; c < result.keypoint_features.cols(); ++c) csv += ",f" + std::to_string(c);
      csv += "\r\n";
      for (std::size_t r = 0; r < result.keypoints.size(); ++r) {
        const Vec3 p = result.keypoints[r];
        csv += fmt(p.x) + "," + fmt(p.y) + "," + fmt(p.z) + "," + fmt(result.keypoint_scores[r]);
        for (double f : result.keypoint_features.row(r)) csv += "," + fmt(f);
        csv += "\r\n";
      }
      emit(agg_out, csv);
    } else if (nm->parsed()) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(read_text_file(nms_input));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(nms_input + ": " + e.what());
      }
      if (!doc.is_object() || !doc.contains("proposals") || !doc["proposals"].is_array()) {
        throw SchemaError(nms_input + ": expected an object with a \"proposals\" array");
      }
      std::vector<Proposal> proposals;
      for (std::size_t i = 0; i < doc["proposals"].size(); ++i) {
        const auto& p = doc["proposals"][i];
        const std::string where = "/proposals/" + std::to_string(i);
        if (!p.is_object() || !p.contains("score") || !p["score"].is_number()) {
          throw SchemaError(where + ": proposals need a numeric \"score\"");
        }
        proposals.push_back({parse_box(p, where), p["score"].get<double>()});
      }
      const auto keep = nms(proposals, nms_threshold, nms_top);
      emit(nms_out, nlohmann::json{{"keep", keep}}.dump(2) + "\n");
    } else if (pipe->parsed()) {
      const Scene scene = pipe_scene.load();
      const PipelineConfig cfg = pipe_flags.config();
      const auto weights = pipe_flags.load_weights(cfg, scene.cloud.feat_dim());
      const auto result = run_pipeline(scene, weights, cfg);
      emit(pipe_out, detections_json(result, scene));
      if (!pipe_timings.empty()) write_text_file(pipe_timings, timings_json(result));
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.invalid_input() ? kExitInvalid : kExitFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << " (offset " << e.offset() << ")\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
