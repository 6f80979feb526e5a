#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "voxpoint/aggregate.hpp"
#include "voxpoint/detect.hpp"
#include "voxpoint/io.hpp"
#include "voxpoint/query.hpp"
#include "voxpoint/sampling.hpp"
#include "voxpoint/voxelize.hpp"
#include "voxpoint/weights_io.hpp"

namespace voxpoint {

/// Failure inside one pipeline stage; what() is prefixed with the stage name.
/// `invalid_input()` is set when the cause was a rejected argument or shape.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what, bool invalid_input = false)
      : std::runtime_error("stage '" + stage + "': " + what),
        stage_(std::move(stage)),
        invalid_input_(invalid_input) {}
  const std::string& stage() const noexcept { return stage_; }
  bool invalid_input() const noexcept { return invalid_input_; }

 private:
  std::string stage_;
  bool invalid_input_;
};

enum class ScoreSource {
  kOracle,  // in-box labels of the ground truth, optionally noised
  kScene,   // scores stored with the scene
  kMlp,     // score perceptrons from the weights
};

struct PipelineConfig {
  GridSpec grid = GridSpec::kitti();
  SamplingConfig sampling;
  QueryConfig query{4, 16, 4, 1.6};
  std::array<int, kVoxelBranches> strides{1, 2, 4, 8};
  double raw_radius = 0.8;
  std::size_t raw_max_samples = 16;
  RoiGridConfig roi;
  LossConfig loss;
  AnchorSpec anchors;
  double nms_pre_threshold = 0.7;
  std::size_t nms_pre_top = 100;
  double nms_post_threshold = 0.1;
  std::size_t nms_post_top = 100;
  ScoreSource score_source = ScoreSource::kOracle;
  double oracle_sigma = 0.0;
  std::uint64_t seed = 0;
  bool reweight_keypoints = true;

  // Layer widths used when synthesizing weights.
  std::array<std::size_t, 4> sa_group_widths{16, 32, 64, 64};
  std::size_t attention_dim = 16;
  std::size_t pointnet_width = 32;
  std::size_t roi_group_width = 16;
  std::size_t roi_head_hidden = 256;

  void validate() const;
};

/// Every learned parameter the pipeline reads.
struct PipelineWeights {
  std::array<SaLayerWeights, 4> sa;
  std::optional<MlpWeights> raw_score;
  std::array<BranchWeights, kBranches> branches;  // strides 1, 2, 4, 8, raw
  RoiGridWeights roi;
  MlpWeights rcnn_cls;

  WeightBundle to_bundle() const;
  /// Throws std::out_of_range naming the first missing section.
  static PipelineWeights from_bundle(const WeightBundle& bundle);
};

/// Seeded random weights sized for `cfg` and clouds with `point_feat_dim` features.
PipelineWeights synthetic_weights(const PipelineConfig& cfg, std::size_t point_feat_dim, std::uint64_t seed);

struct Detection {
  Box3D box;
  double score = 0.0;            // RPN stub score
  double rcnn_confidence = 0.0;  // sigmoid of the refinement head
  std::size_t anchor_index = 0;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

/// Deterministic per-run statistics (everything except wall time).
struct PipelineStats {
  std::size_t cropped_points = 0;
  std::size_t input_points = 0;
  std::array<std::size_t, kVoxelBranches> voxels{};
  std::array<std::size_t, 4> keypoints_per_layer{};
  std::array<double, 4> keypoint_fg_fraction{};
  std::size_t anchors = 0;
  std::size_t scored_anchors = 0;
  std::size_t rois = 0;
  std::size_t detections = 0;
  double feature_mean = 0.0;
  double feature_stddev = 0.0;
  double feature_min = 0.0;
  double feature_max = 0.0;
  double seg_loss = 0.0;
  double key_loss = 0.0;
};

struct PipelineResult {
  PointCloud cropped;
  std::vector<std::size_t> input_indices;  // into `cropped`
  ScoredPoints input;
  std::vector<SaLayerResult> sa_layers;
  std::vector<Vec3> keypoints;
  std::vector<double> keypoint_scores;
  FeatureMatrix keypoint_features;
  std::vector<Proposal> rois;
  std::vector<std::size_t> roi_anchor_index;
  std::vector<std::vector<double>> roi_features;
  std::vector<Detection> detections;
  PipelineStats stats;
  std::vector<StageTiming> timings;
};

/// crop -> voxelize (4 strides) -> SA chain -> voxel query per stride ->
/// attention + residual aggregation -> BEV sample -> assembled keypoint
/// features -> anchors + stub scores -> NMS -> RoI-grid pooling -> NMS.
///
/// The RPN score of an anchor is a soft point-set Jaccard index between the
/// points inside its BEV footprint and the scored foreground:
/// sum_in(s) / (count_in + sum_all(s) - sum_in(s)).
PipelineResult run_pipeline(const Scene& scene, const PipelineWeights& weights, const PipelineConfig& cfg);

/// Deterministic detections document (no wall-time fields).
std::string detections_json(const PipelineResult& result, const Scene& scene);
/// Stage timings.
std::string timings_json(const PipelineResult& result);

}  // namespace voxpoint
