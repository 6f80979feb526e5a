#include "voxpoint/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "voxpoint/errors.hpp"
#include "voxpoint/parallel.hpp"

namespace voxpoint {

namespace {

void check_count(std::size_t m, std::size_t n) {
  if (m > n) {
    throw ArgumentError("cannot sample " + std::to_string(m) + " keypoints from " +
                        std::to_string(n) + " points");
  }
}

// Relaxes dist[j] = min(dist[j], |p_j - p_pick|).
void relax(std::span<const Vec3> points, std::size_t pick, std::vector<double>& dist) {
  const Vec3 c = points[pick];
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double d = std::sqrt(squared_distance(points[j], c));
    if (d < dist[j]) dist[j] = d;
  }
}

}  // namespace

void ScoredPoints::validate() const {
  if (scores.size() != points.size()) {
    throw ShapeError("ScoredPoints: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(points.size()) + " points");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("ScoredPoints: score outside [0, 1]");
  }
}

ScoredPoints ScoredPoints::select(std::span<const std::size_t> indices) const {
  ScoredPoints out{points.select(indices), {}};
  out.scores.reserve(indices.size());
  for (std::size_t i : indices) out.scores.push_back(scores.at(i));
  return out;
}

void SamplingConfig::validate() const {
  if (!(gamma > 0.0)) throw ArgumentError("SamplingConfig: gamma must be positive");
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) throw ArgumentError("SamplingConfig: keypoint counts must be positive");
    if (k > 0 && counts[k] >= counts[k - 1]) {
      throw ArgumentError("SamplingConfig: keypoint counts must be strictly decreasing");
    }
    if (!(layer_loss_weights[k] > 0.0)) {
      throw ArgumentError("SamplingConfig: layer loss weights must be positive");
    }
    if (!(radii[k][0] > 0.0 && radii[k][1] > 0.0)) {
      throw ArgumentError("SamplingConfig: radii must be positive");
    }
  }
  if (mlp_hidden == 0) throw ArgumentError("SamplingConfig: mlp_hidden must be positive");
}

std::vector<std::uint8_t> label_foreground(const PointCloud& cloud, std::span<const Box3D> boxes) {
  std::vector<std::uint8_t> labels(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.xyz(i);
    for (const auto& b : boxes) {
      if (point_in_box(p, b)) {
        labels[i] = 1;
        break;
      }
    }
  }
  return labels;
}

std::vector<double> mlp_scores(const FeatureMatrix& features, const MlpWeights& weights) {
  weights.validate();
  if (weights.output_dim() != 1) throw ShapeError("score MLP must end in a scalar");
  if (features.cols() != weights.input_dim()) {
    throw ShapeError("score MLP expects " + std::to_string(weights.input_dim()) +
                     " input features, got " + std::to_string(features.cols()));
  }
  std::vector<double> out(features.rows());
  parallel_for(features.rows(), [&](std::size_t i) {
    out[i] = sigmoid(mlp_forward(weights, features.row(i), LastActivation::kLinear)[0]);
  });
  return out;
}

ScoredPoints score_provider(const PointCloud& cloud, const ScoreMode& mode) {
  ScoredPoints sp{cloud, std::vector<double>(cloud.size(), 0.0)};
  if (const auto* oracle = std::get_if<OracleScoreMode>(&mode)) {
    if (oracle->labels.size() != cloud.size()) {
      throw ShapeError("oracle scores: label count does not match cloud size");
    }
    if (oracle->sigma < 0.0) throw ArgumentError("oracle scores: sigma must be non-negative");
    std::mt19937_64 engine(oracle->seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      double s = oracle->labels[i] ? 1.0 : 0.0;
      if (oracle->sigma > 0.0) s = std::clamp(s + oracle->sigma * noise(engine), 0.0, 1.0);
      sp.scores[i] = s;
    }
    return sp;
  }
  const auto& mlp = std::get<MlpScoreMode>(mode);
  FeatureMatrix feats(cloud.size(), cloud.feat_dim(), cloud.feats());
  sp.scores = mlp_scores(feats, mlp.weights);
  return sp;
}

std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t m, std::size_t seed_index) {
  check_count(m, points.size());
  std::vector<std::size_t> picks;
  if (m == 0) return picks;
  if (seed_index >= points.size()) throw ArgumentError("fps: seed index out of range");
  picks.reserve(m);
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(points.size(), 0);
  std::size_t pick = seed_index;
  for (;;) {
    picks.push_back(pick);
    taken[pick] = 1;
    if (picks.size() == m) break;
    relax(points, pick, dist);
    double best = -1.0;
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (!taken[j] && dist[j] > best) {
        best = dist[j];
        pick = j;
      }
    }
  }
  return picks;
}

std::vector<std::size_t> topk(std::span<const double> scores, std::size_t m) {
  check_count(m, scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(m);
  return order;
}

std::vector<std::size_t> sfps(std::span<const Vec3> points, std::span<const double> scores,
                              std::size_t m, double gamma, SfpsMode mode) {
  if (scores.size() != points.size()) throw ShapeError("sfps: score count does not match points");
  if (!(gamma > 0.0)) throw ArgumentError("sfps: gamma must be positive");
  check_count(m, points.size());
  if (mode == SfpsMode::kTopK) return topk(scores, m);

  std::vector<std::size_t> picks;
  if (m == 0) return picks;
  picks.reserve(m);
  const std::size_t n = points.size();
  std::vector<double> weight(n);
  for (std::size_t j = 0; j < n; ++j) weight[j] = std::expm1(gamma * scores[j]);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> taken(n, 0);

  std::size_t pick = static_cast<std::size_t>(
      std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
  for (;;) {
    picks.push_back(pick);
    taken[pick] = 1;
    if (picks.size() == m) break;
    relax(points, pick, dist);
    double best_rect = -1.0;
    double best_plain = -1.0;
    std::size_t arg_rect = n;
    std::size_t arg_plain = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      const double r = weight[j] * dist[j];
      if (r > best_rect) {
        best_rect = r;
        arg_rect = j;
      }
      if (dist[j] > best_plain) {
        best_plain = dist[j];
        arg_plain = j;
      }
    }
    pick = best_rect > 0.0 ? arg_rect : arg_plain;
  }
  return picks;
}

std::vector<std::size_t> sfps(const ScoredPoints& sp, std::size_t m, double gamma, SfpsMode mode) {
  return sfps(sp.points.positions(), sp.scores, m, gamma, mode);
}

double bce(double s, double y) {
  const double p = std::clamp(s, kProbEps, 1.0 - kProbEps);
  return -(y * std::log(p) + (1.0 - y) * std::log1p(-p));
}

double seg_loss(std::span<const SegLayerInput> layers, const SamplingConfig& config) {
  if (layers.size() > config.layer_loss_weights.size()) {
    throw ShapeError("seg_loss: more layers than configured loss weights");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.scores.size() != layer.labels.size()) {
      throw ShapeError("seg_loss: layer " + std::to_string(k + 1) + " has " +
                       std::to_string(layer.scores.size()) + " scores but " +
                       std::to_string(layer.labels.size()) + " labels");
    }
    if (layer.scores.empty()) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < layer.scores.size(); ++i) sum += bce(layer.scores[i], layer.labels[i]);
    total += config.layer_loss_weights[k] / static_cast<double>(layer.scores.size()) * sum;
  }
  return total;
}

std::vector<double> group_and_pool(std::span<const Vec3> positions, const FeatureMatrix& features,
                                   Vec3 center, double radius, const MlpWeights& mlp) {
  if (features.rows() != positions.size()) throw ShapeError("group_and_pool: feature rows mismatch");
  if (mlp.input_dim() != features.cols() + 3) {
    throw ShapeError("group_and_pool: perceptron expects " + std::to_string(mlp.input_dim()) +
                     " inputs, grouped rows have " + std::to_string(features.cols() + 3));
  }
  const double r2 = radius * radius;
  std::vector<double> pooled(mlp.output_dim(), 0.0);
  std::vector<double> row(features.cols() + 3);
  bool any = false;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (squared_distance(positions[i], center) >= r2) continue;
    const auto f = features.row(i);
    std::copy(f.begin(), f.end(), row.begin());
    const Vec3 off = positions[i] - center;
    row[f.size()] = off.x;
    row[f.size() + 1] = off.y;
    row[f.size() + 2] = off.z;
    const auto y = mlp_forward(mlp, row, LastActivation::kRelu);
    if (!any) {
      pooled = y;
      any = true;
    } else {
      for (std::size_t c = 0; c < y.size(); ++c) pooled[c] = std::max(pooled[c], y[c]);
    }
  }
  return pooled;
}

SaLayerResult sa_layer_forward(const ScoredPoints& sp, const FeatureMatrix& features,
                               int layer_index, const SamplingConfig& config,
                               const SaLayerWeights& weights) {
  if (layer_index < 1 || layer_index > 4) throw ArgumentError("sa_layer_forward: layer index must be in 1..4");
  sp.validate();
  if (features.rows() != sp.size()) throw ShapeError("sa_layer_forward: one feature row per point required");
  for (const auto& g : weights.group_mlps) g.validate();

  const auto k = static_cast<std::size_t>(layer_index - 1);
  const std::size_t m = std::min(config.counts[k], sp.size());

  SaLayerResult result;
  result.input_scores = sp.scores;
  if (layer_index > 1 && weights.score_mlp) {
    result.input_scores = mlp_scores(features, *weights.score_mlp);
  }
  const auto positions = sp.points.positions();
  result.indices = layer_index == 1 ? fps(positions, m)
                                    : sfps(positions, result.input_scores, m, config.gamma);

  result.keypoints.points = sp.points.select(result.indices);
  result.keypoints.scores.reserve(m);
  for (std::size_t i : result.indices) result.keypoints.scores.push_back(result.input_scores[i]);

  const std::size_t width0 = weights.group_mlps[0].output_dim();
  const std::size_t width1 = weights.group_mlps[1].output_dim();
  result.features = FeatureMatrix(m, width0 + width1);
  parallel_for(m, [&](std::size_t q) {
    const Vec3 center = positions[result.indices[q]];
    const auto a = group_and_pool(positions, features, center, config.radii[k][0], weights.group_mlps[0]);
    const auto b = group_and_pool(positions, features, center, config.radii[k][1], weights.group_mlps[1]);
    auto row = result.features.row(q);
    std::copy(a.begin(), a.end(), row.begin());
    std::copy(b.begin(), b.end(), row.begin() + static_cast<std::ptrdiff_t>(width0));
  });
  return result;
}

}  // namespace voxpoint
