#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "voxpoint/geom.hpp"
#include "voxpoint/matrix.hpp"
#include "voxpoint/mlp.hpp"

namespace voxpoint {

/// Probability clamp shared by every log-based loss.
inline constexpr double kProbEps = 1e-7;

/// Points paired with foreground scores in [0, 1].
struct ScoredPoints {
  PointCloud points;
  std::vector<double> scores;

  std::size_t size() const noexcept { return points.size(); }
  /// Throws ShapeError on length mismatch, ArgumentError on scores outside [0, 1].
  void validate() const;
  ScoredPoints select(std::span<const std::size_t> indices) const;
};

/// Keypoint sampling chain configuration (four SA layers).
struct SamplingConfig {
  double gamma = 1.0;
  std::size_t input_points = 16384;
  std::array<std::size_t, 4> counts{4096, 2048, 1024, 256};
  std::array<double, 4> layer_loss_weights{0.1, 0.01, 0.001, 0.0001};
  std::array<std::array<double, 2>, 4> radii{{{0.1, 0.5}, {0.5, 1.0}, {1.0, 2.0}, {2.0, 4.0}}};
  std::size_t mlp_hidden = 64;

  void validate() const;
};

/// 1 for points inside any box (faces inclusive), else 0.
std::vector<std::uint8_t> label_foreground(const PointCloud& cloud, std::span<const Box3D> boxes);

/// Scores are clamp(label + sigma * N(0,1), 0, 1) drawn from a seeded engine.
struct OracleScoreMode {
  std::vector<std::uint8_t> labels;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};
/// Scores are sigmoid(linear -> ReLU -> linear) over per-point features.
struct MlpScoreMode {
  MlpWeights weights;
};
using ScoreMode = std::variant<OracleScoreMode, MlpScoreMode>;

ScoredPoints score_provider(const PointCloud& cloud, const ScoreMode& mode);
/// Sigmoid of the perceptron over each row of `features`.
std::vector<double> mlp_scores(const FeatureMatrix& features, const MlpWeights& weights);

/// Greedy max-min furthest point sampling. Starts at `seed_index`, returns
/// indices in selection order; ties go to the lowest index.
/// Throws ArgumentError if m exceeds the point count.
std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t m, std::size_t seed_index = 0);
inline std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t m) {
  return fps(cloud.positions(), m);
}

enum class SfpsMode { kSfps, kTopK };

/// Score-guided FPS. The first pick is argmax(score); every later round
/// picks argmax over unselected points of (exp(gamma * s_i) - 1) * d_i, where
/// d_i is the distance to the nearest selected point. If every rectified
/// distance of a round is zero, that round falls back to plain d_i.
/// kTopK returns the m highest scores (ties by index). Ties go to the lowest index.
std::vector<std::size_t> sfps(std::span<const Vec3> points, std::span<const double> scores,
                              std::size_t m, double gamma, SfpsMode mode = SfpsMode::kSfps);
std::vector<std::size_t> sfps(const ScoredPoints& sp, std::size_t m, double gamma,
                              SfpsMode mode = SfpsMode::kSfps);
std::vector<std::size_t> topk(std::span<const double> scores, std::size_t m);

/// Binary cross entropy with s clamped to [eps, 1 - eps].
double bce(double s, double y);

struct SegLayerInput {
  std::span<const double> scores;
  std::span<const double> labels;
};
/// Sum over layers k of lambda_k / N_k * sum_i BCE(s_i, y_i). Layers beyond
/// the configured four are rejected; empty layers contribute nothing.
double seg_loss(std::span<const SegLayerInput> layers, const SamplingConfig& config);

/// Score head (optional) and one shared perceptron per grouping radius.
/// Each group perceptron takes rows [feature ; p - keypoint].
struct SaLayerWeights {
  std::optional<MlpWeights> score_mlp;
  std::array<MlpWeights, 2> group_mlps;
};

struct SaLayerResult {
  std::vector<std::size_t> indices;  // into the layer input
  ScoredPoints keypoints;
  FeatureMatrix features;            // one row per keypoint: pooled radius 0 ++ pooled radius 1
  std::vector<double> input_scores;  // scores used for selection, one per input point
};

/// Max-pooled shared-perceptron output over points within `radius`
/// (strictly closer) of `center`; the zero vector when the group is empty.
std::vector<double> group_and_pool(std::span<const Vec3> positions, const FeatureMatrix& features,
                                   Vec3 center, double radius, const MlpWeights& mlp);

/// One set-abstraction layer (layer_index in 1..4). Layer 1 selects with plain
/// FPS. Later layers rescore with `weights.score_mlp` when present (otherwise
/// the incoming scores are kept) and select with S-FPS. The keypoint count is
/// min(config.counts[layer_index - 1], input size).
SaLayerResult sa_layer_forward(const ScoredPoints& sp, const FeatureMatrix& features,
                               int layer_index, const SamplingConfig& config,
                               const SaLayerWeights& weights);

}  // namespace voxpoint
