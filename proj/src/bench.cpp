#include "voxpoint/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "voxpoint/errors.hpp"
#include "voxpoint/parallel.hpp"
#include "voxpoint/sampling.hpp"

namespace voxpoint {

namespace {

using Clock = std::chrono::steady_clock;

// Keeps timed query results observable.
volatile std::size_t benchmark_sink = 0;

struct TimingStats {
  double median = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

TimingStats summarize(std::vector<double> samples) {
  TimingStats t;
  if (samples.empty()) return t;
  t.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - t.mean) * (s - t.mean);
  t.stddev = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  t.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  return t;
}

// Runs fn() once to warm up, then `reps` timed times; returns seconds per run.
template <typename Fn>
std::vector<double> time_runs(std::size_t reps, Fn&& fn) {
  fn();
  std::vector<double> out;
  out.reserve(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    out.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return out;
}

std::string gamma_label(double g) {
  std::ostringstream s;
  s << "sfps(g=" << g << ")";
  return s.str();
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

void BenchConfig::validate() const {
  if (stride <= 0) throw ArgumentError("BenchConfig: stride must be positive");
  query.validate();
  if (keypoints == 0) throw ArgumentError("BenchConfig: keypoints must be positive");
  if (repetitions < 10) throw ArgumentError("BenchConfig: query timings need at least 10 repetitions");
  if (sample_repetitions == 0) throw ArgumentError("BenchConfig: need at least one sampling repetition");
  for (double g : gammas) {
    if (!(g > 0.0)) throw ArgumentError("BenchConfig: gammas must be positive");
  }
}

std::vector<std::string> sampler_names(const BenchConfig& cfg) {
  std::vector<std::string> names{"fps"};
  for (double g : cfg.gammas) names.push_back(gamma_label(g));
  names.push_back("topk");
  return names;
}

const std::vector<std::string>& BenchReport::columns() {
  static const std::vector<std::string> kColumns{
      "scene_id",        "n_points",        "n_voxels",        "keypoints",
      "query_method",    "sampler",         "query_us_median", "query_us_mean",
      "query_us_stddev", "sample_ms_median", "candidates_per_keypoint", "max_candidates",
      "fg_fraction",     "fg_recall"};
  return kColumns;
}

std::string BenchReport::to_csv() const {
  std::string out;
  const auto& cols = columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += "\r\n";
  for (const auto& r : rows) {
    const std::vector<std::string> fields{
        csv_escape(r.scene_id), std::to_string(r.n_points), std::to_string(r.n_voxels),
        std::to_string(r.keypoints), csv_escape(r.query_method), csv_escape(r.sampler),
        fmt_double(r.query_us_median), fmt_double(r.query_us_mean), fmt_double(r.query_us_stddev),
        fmt_double(r.sample_ms_median), fmt_double(r.candidates_per_keypoint),
        std::to_string(r.max_candidates), fmt_double(r.fg_fraction), fmt_double(r.fg_recall)};
    for (std::size_t c = 0; c < fields.size(); ++c) out += (c ? "," : "") + fields[c];
    out += "\r\n";
  }
  return out;
}

BenchReport run_benchmark(std::span<const Scene> scenes, const BenchConfig& cfg) {
  cfg.validate();
  if (scenes.empty()) throw ArgumentError("run_benchmark: need at least one scene");
  const auto samplers = sampler_names(cfg);
  std::vector<std::vector<BenchRow>> per_scene(scenes.size());

  parallel_for(scenes.size(), [&](std::size_t s) {
    const Scene& scene = scenes[s];
    const PointCloud cloud = crop_to_range(scene.cloud, cfg.grid);
    const SparseVoxelMap map = voxelize_mean(cloud, cfg.grid, cfg.stride);
    const auto labels = label_foreground(cloud, scene.gt_boxes);
    const std::size_t total_fg = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));

    std::vector<double> scores;
    if (scene.scores && scene.scores->size() == scene.cloud.size()) {
      // Scores follow the points through the crop.
      for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
        if (cfg.grid.contains(scene.cloud.xyz(i))) scores.push_back((*scene.scores)[i]);
      }
    } else {
      scores = score_provider(cloud, OracleScoreMode{labels, cfg.oracle_sigma, cfg.seed + s}).scores;
    }

    const std::string scene_id = scene.frame_id.empty() ? "scene-" + std::to_string(s) : scene.frame_id;
    const std::size_t m = std::min(cfg.keypoints, cloud.size());
    const VoxelQuery vq(cfg.query);

    for (std::size_t k = 0; k < samplers.size(); ++k) {
      std::vector<std::size_t> picks;
      const auto sample = [&] {
        if (k == 0) picks = fps(cloud.positions(), m);
        else if (k + 1 == samplers.size()) picks = topk(scores, m);
        else picks = sfps(cloud.positions(), scores, m, cfg.gammas[k - 1]);
      };
      const auto sample_times = summarize(time_runs(cfg.sample_repetitions, sample));

      std::size_t fg_picked = 0;
      std::vector<Vec3> centers;
      centers.reserve(picks.size());
      for (std::size_t i : picks) {
        fg_picked += labels[i];
        centers.push_back(cloud.xyz(i));
      }

      for (const std::string method : {"ball_query", "voxel_query"}) {
        QueryStats stats;
        std::uint64_t max_visit = 0;
        for (const Vec3& c : centers) {
          QueryStats one;
          if (method == "ball_query") ball_query(c, map, cfg.query, &one);
          else vq(c, map, &one);
          stats.candidates_visited += one.candidates_visited;
          max_visit = std::max(max_visit, one.candidates_visited);
        }
        std::size_t sink = 0;
        const auto runs = time_runs(cfg.repetitions, [&] {
          for (const Vec3& c : centers) {
            sink += method == "ball_query" ? ball_query(c, map, cfg.query).size() : vq(c, map).size();
          }
        });
        std::vector<double> per_keypoint_us;
        for (double r : runs) per_keypoint_us.push_back(centers.empty() ? 0.0 : r * 1e6 / static_cast<double>(centers.size()));
        const auto t = summarize(per_keypoint_us);

        BenchRow row;
        row.scene_id = scene_id;
        row.n_points = cloud.size();
        row.n_voxels = map.size();
        row.keypoints = picks.size();
        row.query_method = method;
        row.sampler = samplers[k];
        row.query_us_median = t.median;
        row.query_us_mean = t.mean;
        row.query_us_stddev = t.stddev;
        row.sample_ms_median = sample_times.median * 1e3;
        row.candidates_per_keypoint =
            centers.empty() ? 0.0 : static_cast<double>(stats.candidates_visited) / static_cast<double>(centers.size());
        row.max_candidates = max_visit;
        row.fg_fraction = picks.empty() ? 0.0 : static_cast<double>(fg_picked) / static_cast<double>(picks.size());
        row.fg_recall = total_fg == 0 ? 0.0 : static_cast<double>(fg_picked) / static_cast<double>(total_fg);
        per_scene[s].push_back(std::move(row));
        benchmark_sink = sink;
      }
    }
  });

  BenchReport report;
  for (auto& rows : per_scene) {
    for (auto& r : rows) report.rows.push_back(std::move(r));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.scene_id, a.query_method, a.sampler) < std::tie(b.scene_id, b.query_method, b.sampler);
  });
  return report;
}

}  // namespace voxpoint
