#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxpoint/io.hpp"
#include "voxpoint/query.hpp"
#include "voxpoint/voxelize.hpp"

namespace voxpoint {

struct BenchConfig {
  GridSpec grid = GridSpec::kitti();
  int stride = 1;
  QueryConfig query{4, 16, 4, 0.2};
  std::size_t keypoints = 1024;
  std::vector<double> gammas{1.0, 2.0, 3.0, 100.0};
  std::size_t repetitions = 10;  // timed query runs (at least 10); one extra warm-up run is discarded
  std::size_t sample_repetitions = 3;
  double oracle_sigma = 0.0;     // used when a scene carries no scores
  std::uint64_t seed = 0;

  void validate() const;
};

/// One (scene, query method, sampler) measurement. Query times are per
/// keypoint; candidates counts the cells (voxel query) or voxels (ball query)
/// examined per keypoint.
struct BenchRow {
  std::string scene_id;
  std::size_t n_points = 0;
  std::size_t n_voxels = 0;
  std::size_t keypoints = 0;
  std::string query_method;
  std::string sampler;
  double query_us_median = 0.0;
  double query_us_mean = 0.0;
  double query_us_stddev = 0.0;
  double sample_ms_median = 0.0;
  double candidates_per_keypoint = 0.0;
  std::uint64_t max_candidates = 0;
  double fg_fraction = 0.0;  // foreground share of the sampled keypoints
  double fg_recall = 0.0;    // sampled foreground points over all foreground points
};

struct BenchReport {
  std::vector<BenchRow> rows;

  static const std::vector<std::string>& columns();
  /// RFC 4180 CSV with a header row; rows in (scene, method, sampler) order.
  std::string to_csv() const;
};

/// Sampler labels: "fps", "sfps(g=<gamma>)" per configured gamma, "topk".
std::vector<std::string> sampler_names(const BenchConfig& cfg);

/// For every scene: crop, voxelize at cfg.stride, score (scene scores or
/// seeded oracle labels), sample with each sampler, then time ball_query and
/// voxel_query over the keypoints (median of cfg.repetitions runs).
BenchReport run_benchmark(std::span<const Scene> scenes, const BenchConfig& cfg);

}  // namespace voxpoint
