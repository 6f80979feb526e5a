#include "voxpoint/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <type_traits>
#include <utility>

#include <json.hpp>

#include "voxpoint/errors.hpp"
#include "voxpoint/parallel.hpp"

namespace voxpoint {

namespace {

using Clock = std::chrono::steady_clock;

const std::array<std::string, kBranches> kBranchNames{"stride1", "stride2", "stride4", "stride8", "raw"};

std::string sa_name(std::size_t k) { return "sa" + std::to_string(k + 1); }

// Times one stage and labels any failure with its name.
template <typename Fn>
auto run_stage(PipelineResult& result, const std::string& name, Fn&& fn) {
  const auto t0 = Clock::now();
  const auto record = [&] {
    result.timings.push_back({name, std::chrono::duration<double, std::milli>(Clock::now() - t0).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const PipelineError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw PipelineError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

// Sums of float32 draws are rounded again so every stored value stays float32-exact.
double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

ResidualBlock random_block(std::size_t out, std::size_t in, WeightRng& rng) {
  ResidualBlock b;
  b.linear = random_dense(out, in, rng);
  b.scale.resize(out);
  b.shift.resize(out);
  b.mean.resize(out);
  b.var.resize(out);
  for (std::size_t c = 0; c < out; ++c) {
    b.scale[c] = to_f32(1.0 + rng.uniform(0.1));
    b.shift[c] = rng.uniform(0.1);
    b.mean[c] = rng.uniform(0.1);
    b.var[c] = to_f32(1.0 + std::abs(rng.uniform(0.1)));
  }
  b.eps = to_f32(1e-5);
  return b;
}

AttentionWeights random_attention(std::size_t d_f, std::size_t d_k, std::size_t d_v, WeightRng& rng) {
  AttentionWeights a{d_f, d_k, d_v, std::vector<double>(d_k * d_f), std::vector<double>(d_k * d_f),
                     std::vector<double>(d_v * d_f)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_f));
  for (double& v : a.w_q) v = rng.uniform(scale);
  for (double& v : a.w_k) v = rng.uniform(scale);
  for (double& v : a.w_v) v = rng.uniform(scale);
  return a;
}

// Random subset of `n` indices drawn without replacement, ascending.
std::vector<std::size_t> seeded_subset(std::size_t total, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n >= total) return idx;
  std::mt19937_64 engine(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>((engine() >> 11) * 0x1.0p-53 * static_cast<double>(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> to_doubles(std::span<const std::uint8_t> labels) {
  return {labels.begin(), labels.end()};
}

double fg_fraction(std::span<const std::uint8_t> labels) {
  if (labels.empty()) return 0.0;
  const auto fg = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  return static_cast<double>(fg) / static_cast<double>(labels.size());
}

// Raw-point neighbors of a keypoint: within `radius`, nearest first (index
// breaks ties), at most `max_samples`; rows [feature ; p - keypoint].
FeatureMatrix raw_neighbor_rows(const PointCloud& cloud, Vec3 center, double radius, std::size_t max_samples) {
  std::vector<std::pair<double, std::size_t>> hits;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d2 = squared_distance(cloud.xyz(i), center);
    if (d2 <= r2) hits.emplace_back(d2, i);
  }
  std::sort(hits.begin(), hits.end());
  if (hits.size() > max_samples) hits.resize(max_samples);
  FeatureMatrix rows(hits.size(), cloud.feat_dim() + 3);
  for (std::size_t h = 0; h < hits.size(); ++h) {
    const std::size_t i = hits[h].second;
    auto row = rows.row(h);
    const auto f = cloud.feat(i);
    std::copy(f.begin(), f.end(), row.begin());
    const Vec3 off = cloud.xyz(i) - center;
    row[f.size()] = off.x;
    row[f.size() + 1] = off.y;
    row[f.size() + 2] = off.z;
  }
  return rows;
}

// Soft point-set Jaccard score of every anchor footprint against the scored points.
std::vector<double> anchor_scores(std::span<const Box3D> anchors, const ScoredPoints& sp, const GridSpec& grid,
                                  int stride) {
  const double cell_x = grid.voxel_size().x * stride;
  const double cell_y = grid.voxel_size().y * stride;
  const auto dims = grid.strided_dims(stride);
  const auto cols = static_cast<std::size_t>(dims[0]);
  const auto rows = static_cast<std::size_t>(dims[1]);
  const Vec3 lo = grid.range_min();

  std::vector<std::vector<std::size_t>> buckets(cols * rows);
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const Vec3 p = sp.points.xyz(i);
    const auto u = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor((p.x - lo.x) / cell_x)), 0,
                                              static_cast<std::ptrdiff_t>(cols) - 1);
    const auto v = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor((p.y - lo.y) / cell_y)), 0,
                                              static_cast<std::ptrdiff_t>(rows) - 1);
    buckets[static_cast<std::size_t>(v) * cols + static_cast<std::size_t>(u)].push_back(i);
  }
  const double total = std::accumulate(sp.scores.begin(), sp.scores.end(), 0.0);

  std::vector<double> out(anchors.size(), 0.0);
  parallel_for(anchors.size(), [&](std::size_t a) {
    const Box3D& b = anchors[a];
    const double c = std::cos(b.yaw);
    const double s = std::sin(b.yaw);
    const double ex = 0.5 * (std::abs(c) * b.l + std::abs(s) * b.w);
    const double ey = 0.5 * (std::abs(s) * b.l + std::abs(c) * b.w);
    const auto cell_range = [](double from, double to, double size, double origin, std::size_t n) {
      const auto first = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor((from - origin) / size)));
      const auto last = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                                 static_cast<std::ptrdiff_t>(std::floor((to - origin) / size)));
      return std::pair{first, last};
    };
    const auto [u0, u1] = cell_range(b.cx - ex, b.cx + ex, cell_x, lo.x, cols);
    const auto [v0, v1] = cell_range(b.cy - ey, b.cy + ey, cell_y, lo.y, rows);
    double in_sum = 0.0;
    std::size_t in_count = 0;
    for (auto v = v0; v <= v1; ++v) {
      for (auto u = u0; u <= u1; ++u) {
        for (std::size_t i : buckets[static_cast<std::size_t>(v) * cols + static_cast<std::size_t>(u)]) {
          const Vec3 p = sp.points.xyz(i);
          const double dx = p.x - b.cx;
          const double dy = p.y - b.cy;
          const double lx = c * dx + s * dy;
          const double ly = -s * dx + c * dy;
          if (std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w) {
            in_sum += sp.scores[i];
            ++in_count;
          }
        }
      }
    }
    const double denom = static_cast<double>(in_count) + total - in_sum;
    out[a] = denom > 0.0 ? in_sum / denom : 0.0;
  });
  return out;
}

void check_weights(const PipelineWeights& w, const PipelineConfig& cfg, std::size_t d) {
  if (w.sa[0].group_mlps[0].input_dim() != d + 3) {
    throw ShapeError("weights expect " + std::to_string(w.sa[0].group_mlps[0].input_dim() - 3) +
                     " point features, cloud has " + std::to_string(d));
  }
  if (cfg.score_source == ScoreSource::kMlp) {
    if (!w.raw_score) throw ArgumentError("MLP scoring needs a 'raw.score' perceptron");
    if (w.raw_score->input_dim() != d) throw ShapeError("raw.score input width does not match the point features");
  }
  for (std::size_t b = 0; b < kBranches; ++b) {
    const std::size_t want = b < kVoxelBranches ? d + 6 : d + 3;
    if (w.branches[b].attention.d_f != want) {
      throw ShapeError("branch." + kBranchNames[b] + ".attn expects rows of width " +
                       std::to_string(w.branches[b].attention.d_f) + ", got " + std::to_string(want));
    }
  }
  if (w.roi.head.layers.size() != 2) throw ShapeError("roi.head must have two layers");
  if (w.roi.head.output_dim() != cfg.roi.output_dim) throw ShapeError("roi.head output width differs from the config");
  if (w.rcnn_cls.input_dim() != cfg.roi.output_dim || w.rcnn_cls.output_dim() != 1) {
    throw ShapeError("rcnn.cls must map the pooled RoI feature to one logit");
  }
}

nlohmann::json box_json(const Box3D& b) {
  return {{"class", std::string(class_name(b.cls))},
          {"center", {b.cx, b.cy, b.cz}},
          {"size", {b.l, b.w, b.h}},
          {"yaw", b.yaw}};
}

}  // namespace

void PipelineConfig::validate() const {
  sampling.validate();
  query.validate();
  roi.validate();
  loss.validate();
  anchors.validate();
  for (int s : strides) {
    if (s <= 0) throw ArgumentError("PipelineConfig: strides must be positive");
  }
  if (!(raw_radius > 0.0)) throw ArgumentError("PipelineConfig: raw_radius must be positive");
  if (raw_max_samples == 0) throw ArgumentError("PipelineConfig: raw_max_samples must be positive");
  for (double t : {nms_pre_threshold, nms_post_threshold}) {
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("PipelineConfig: NMS thresholds must lie in [0, 1]");
  }
  if (nms_pre_top == 0 || nms_post_top == 0) throw ArgumentError("PipelineConfig: NMS keep counts must be positive");
  if (!(oracle_sigma >= 0.0)) throw ArgumentError("PipelineConfig: oracle_sigma must be non-negative");
  for (std::size_t w : sa_group_widths) {
    if (w == 0) throw ArgumentError("PipelineConfig: layer widths must be positive");
  }
  if (attention_dim == 0 || pointnet_width == 0 || roi_group_width == 0 || roi_head_hidden == 0) {
    throw ArgumentError("PipelineConfig: layer widths must be positive");
  }
}

WeightBundle PipelineWeights::to_bundle() const {
  WeightBundle b;
  for (std::size_t k = 0; k < sa.size(); ++k) {
    if (sa[k].score_mlp) b.mlps[sa_name(k) + ".score"] = *sa[k].score_mlp;
    for (std::size_t r = 0; r < 2; ++r) b.mlps[sa_name(k) + ".group" + std::to_string(r)] = sa[k].group_mlps[r];
  }
  if (raw_score) b.mlps["raw.score"] = *raw_score;
  for (std::size_t i = 0; i < kBranches; ++i) {
    b.attention["branch." + kBranchNames[i] + ".attn"] = branches[i].attention;
    b.pointnets["branch." + kBranchNames[i] + ".rpn"] = branches[i].pointnet;
  }
  for (std::size_t r = 0; r < 2; ++r) b.mlps["roi.group" + std::to_string(r)] = roi.group_mlps[r];
  b.mlps["roi.head"] = roi.head;
  b.mlps["rcnn.cls"] = rcnn_cls;
  return b;
}

PipelineWeights PipelineWeights::from_bundle(const WeightBundle& b) {
  PipelineWeights w;
  for (std::size_t k = 0; k < w.sa.size(); ++k) {
    if (auto it = b.mlps.find(sa_name(k) + ".score"); it != b.mlps.end()) w.sa[k].score_mlp = it->second;
    for (std::size_t r = 0; r < 2; ++r) w.sa[k].group_mlps[r] = b.mlp(sa_name(k) + ".group" + std::to_string(r));
  }
  if (auto it = b.mlps.find("raw.score"); it != b.mlps.end()) w.raw_score = it->second;
  for (std::size_t i = 0; i < kBranches; ++i) {
    w.branches[i].attention = b.attn("branch." + kBranchNames[i] + ".attn");
    w.branches[i].pointnet = b.pointnet("branch." + kBranchNames[i] + ".rpn");
  }
  for (std::size_t r = 0; r < 2; ++r) w.roi.group_mlps[r] = b.mlp("roi.group" + std::to_string(r));
  w.roi.head = b.mlp("roi.head");
  w.rcnn_cls = b.mlp("rcnn.cls");
  return w;
}

PipelineWeights synthetic_weights(const PipelineConfig& cfg, std::size_t d, std::uint64_t seed) {
  cfg.validate();
  WeightRng rng(seed);
  PipelineWeights w;
  const std::size_t hidden = cfg.sampling.mlp_hidden;

  std::size_t in = d;
  for (std::size_t k = 0; k < w.sa.size(); ++k) {
    const std::size_t width = cfg.sa_group_widths[k];
    if (k > 0) {
      const std::array<std::size_t, 3> dims{in, hidden, 1};
      w.sa[k].score_mlp = random_mlp(dims, rng);
    }
    for (auto& g : w.sa[k].group_mlps) {
      const std::array<std::size_t, 3> dims{in + 3, width, width};
      g = random_mlp(dims, rng);
    }
    in = 2 * width;
  }
  if (d > 0) {
    const std::array<std::size_t, 3> dims{d, hidden, 1};
    w.raw_score = random_mlp(dims, rng);
  }

  const std::size_t pw = cfg.pointnet_width;
  for (std::size_t b = 0; b < kBranches; ++b) {
    const std::size_t d_f = b < kVoxelBranches ? d + 6 : d + 3;
    w.branches[b].attention = random_attention(d_f, cfg.attention_dim, cfg.attention_dim, rng);
    w.branches[b].pointnet.blocks.push_back(random_block(pw, cfg.attention_dim + d_f, rng));
    w.branches[b].pointnet.blocks.push_back(random_block(pw, pw, rng));
  }

  const auto h8 = static_cast<std::size_t>(cfg.grid.strided_dims(cfg.strides[kVoxelBranches - 1])[2]);
  const std::size_t keypoint_width = kBranches * pw + (3 + d) * h8;
  for (auto& g : w.roi.group_mlps) {
    const std::array<std::size_t, 3> dims{keypoint_width + 3, cfg.roi_group_width, cfg.roi_group_width};
    g = random_mlp(dims, rng);
  }
  const std::array<std::size_t, 3> head{cfg.roi.grid_points() * 2 * cfg.roi_group_width, cfg.roi_head_hidden,
                                        cfg.roi.output_dim};
  w.roi.head = random_mlp(head, rng);
  const std::array<std::size_t, 2> cls{cfg.roi.output_dim, 1};
  w.rcnn_cls = random_mlp(cls, rng);
  return w;
}

PipelineResult run_pipeline(const Scene& scene, const PipelineWeights& weights, const PipelineConfig& cfg) {
  PipelineResult result;
  run_stage(result, "config", [&] {
    cfg.validate();
    check_weights(weights, cfg, scene.cloud.feat_dim());
    if (cfg.score_source == ScoreSource::kScene && (!scene.scores || scene.scores->size() != scene.cloud.size())) {
      throw ArgumentError("scene scores requested but the scene carries no per-point scores");
    }
  });

  std::vector<double> cropped_scene_scores;
  run_stage(result, "crop", [&] {
    result.cropped = PointCloud(scene.cloud.feat_dim());
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
      if (!cfg.grid.contains(scene.cloud.xyz(i))) continue;
      result.cropped.push_back(scene.cloud.xyz(i), scene.cloud.feat(i));
      if (cfg.score_source == ScoreSource::kScene) cropped_scene_scores.push_back((*scene.scores)[i]);
    }
    result.input_indices = seeded_subset(result.cropped.size(), cfg.sampling.input_points, cfg.seed);
  });
  result.stats.cropped_points = result.cropped.size();
  result.stats.input_points = result.input_indices.size();

  std::vector<SparseVoxelMap> maps;
  run_stage(result, "voxelize", [&] {
    for (std::size_t b = 0; b < kVoxelBranches; ++b) {
      maps.push_back(voxelize_mean(result.cropped, cfg.grid, cfg.strides[b]));
      result.stats.voxels[b] = maps.back().size();
    }
  });
  const BevFeatureMap bev = run_stage(result, "bev", [&] { return bev_from_voxels(maps.back()); });

  std::vector<std::uint8_t> input_labels;
  run_stage(result, "score", [&] {
    result.input.points = result.cropped.select(result.input_indices);
    input_labels = label_foreground(result.input.points, scene.gt_boxes);
    switch (cfg.score_source) {
      case ScoreSource::kOracle:
        result.input.scores =
            score_provider(result.input.points, OracleScoreMode{input_labels, cfg.oracle_sigma, cfg.seed}).scores;
        break;
      case ScoreSource::kScene:
        for (std::size_t i : result.input_indices) result.input.scores.push_back(cropped_scene_scores[i]);
        break;
      case ScoreSource::kMlp:
        result.input.scores = score_provider(result.input.points, MlpScoreMode{*weights.raw_score}).scores;
        break;
    }
    result.input.validate();
  });

  // Labels of every SA layer input, for the segmentation loss.
  std::vector<std::vector<double>> layer_labels{to_doubles(input_labels)};
  run_stage(result, "sample", [&] {
    ScoredPoints current = result.input;
    FeatureMatrix features(current.size(), current.points.feat_dim(), current.points.feats());
    std::vector<std::uint8_t> labels = input_labels;
    for (std::size_t k = 0; k < weights.sa.size(); ++k) {
      auto layer = sa_layer_forward(current, features, static_cast<int>(k + 1), cfg.sampling, weights.sa[k]);
      std::vector<std::uint8_t> picked;
      for (std::size_t i : layer.indices) picked.push_back(labels[i]);
      labels = std::move(picked);
      result.stats.keypoints_per_layer[k] = layer.indices.size();
      result.stats.keypoint_fg_fraction[k] = fg_fraction(labels);
      if (k + 1 < weights.sa.size()) layer_labels.push_back(to_doubles(labels));
      current = layer.keypoints;
      features = layer.features;
      result.sa_layers.push_back(std::move(layer));
    }
    result.keypoints.assign(current.points.positions().begin(), current.points.positions().end());
    result.keypoint_scores = current.scores;

    std::vector<SegLayerInput> seg;
    for (std::size_t k = 0; k < result.sa_layers.size(); ++k) {
      seg.push_back({result.sa_layers[k].input_scores, layer_labels[k]});
    }
    result.stats.seg_loss = seg_loss(seg, cfg.sampling);
    result.stats.key_loss = keypoint_reweight_loss(result.keypoint_scores, labels, cfg.loss);
  });

  run_stage(result, "aggregate", [&] {
    const std::size_t n = result.keypoints.size();
    const VoxelQuery vq(cfg.query);
    std::vector<std::vector<double>> rows(n);
    parallel_for(n, [&](std::size_t q) {
      const Vec3 kp = result.keypoints[q];
      std::array<FeatureMatrix, kBranches> branch_rows;
      for (std::size_t b = 0; b < kVoxelBranches; ++b) {
        branch_rows[b] = neighbor_rows(vq(kp, maps[b]), maps[b].feat_dim());
        if (branch_rows[b].rows() == 0) branch_rows[b] = FeatureMatrix(0, maps[b].feat_dim() + 3);
      }
      branch_rows[kVoxelBranches] = raw_neighbor_rows(result.input.points, kp, cfg.raw_radius, cfg.raw_max_samples);
      auto kf = assemble_keypoint_feature(kp, std::span<const FeatureMatrix, kBranches>(branch_rows), bev,
                                          std::span<const BranchWeights, kBranches>(weights.branches));
      if (cfg.reweight_keypoints) {
        for (double& v : kf.values) v *= result.keypoint_scores[q];
      }
      rows[q] = std::move(kf.values);
    });
    const std::size_t width = n == 0 ? 0 : rows.front().size();
    result.keypoint_features = FeatureMatrix(0, width);
    for (const auto& r : rows) result.keypoint_features.append_row(r);
  });

  const auto& kfeat = result.keypoint_features.data();
  if (!kfeat.empty()) {
    const double count = static_cast<double>(kfeat.size());
    const double mean = std::accumulate(kfeat.begin(), kfeat.end(), 0.0) / count;
    double var = 0.0;
    for (double v : kfeat) var += (v - mean) * (v - mean);
    result.stats.feature_mean = mean;
    result.stats.feature_stddev = std::sqrt(var / count);
    const auto [mn, mx] = std::minmax_element(kfeat.begin(), kfeat.end());
    result.stats.feature_min = *mn;
    result.stats.feature_max = *mx;
  }

  std::vector<Proposal> candidates;
  std::vector<std::size_t> candidate_anchor;
  run_stage(result, "proposals", [&] {
    const auto anchors = generate_anchors(cfg.anchors, cfg.grid);
    result.stats.anchors = anchors.size();
    const auto scores = anchor_scores(anchors, result.input, cfg.grid, cfg.anchors.stride);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (scores[a] > 0.0) {
        candidates.push_back({anchors[a], scores[a]});
        candidate_anchor.push_back(a);
      }
    }
    result.stats.scored_anchors = candidates.size();
    for (std::size_t i : nms(candidates, cfg.nms_pre_threshold, cfg.nms_pre_top)) {
      result.rois.push_back(candidates[i]);
      result.roi_anchor_index.push_back(candidate_anchor[i]);
    }
  });
  result.stats.rois = result.rois.size();

  std::vector<double> confidence(result.rois.size(), 0.0);
  run_stage(result, "refine", [&] {
    result.roi_features.resize(result.rois.size());
    parallel_for(result.rois.size(), [&](std::size_t r) {
      result.roi_features[r] =
          roi_grid_pool(result.rois[r].box, result.keypoints, result.keypoint_features, cfg.roi, weights.roi);
      confidence[r] = sigmoid(mlp_forward(weights.rcnn_cls, result.roi_features[r], LastActivation::kLinear)[0]);
    });
  });

  run_stage(result, "nms", [&] {
    for (std::size_t i : nms(result.rois, cfg.nms_post_threshold, cfg.nms_post_top)) {
      result.detections.push_back({result.rois[i].box, result.rois[i].score, confidence[i], result.roi_anchor_index[i]});
    }
  });
  result.stats.detections = result.detections.size();
  return result;
}

std::string detections_json(const PipelineResult& result, const Scene& scene) {
  const PipelineStats& s = result.stats;
  nlohmann::json doc;
  doc["frame_id"] = scene.frame_id;
  doc["detections"] = nlohmann::json::array();
  for (const auto& d : result.detections) {
    doc["detections"].push_back({{"box", box_json(d.box)},
                                 {"score", d.score},
                                 {"rcnn_confidence", d.rcnn_confidence},
                                 {"anchor_index", d.anchor_index}});
  }
  doc["counts"] = {{"cropped_points", s.cropped_points},
                   {"input_points", s.input_points},
                   {"voxels", s.voxels},
                   {"keypoints_per_layer", s.keypoints_per_layer},
                   {"anchors", s.anchors},
                   {"scored_anchors", s.scored_anchors},
                   {"rois", s.rois},
                   {"detections", s.detections}};
  doc["keypoint_fg_fraction"] = s.keypoint_fg_fraction;
  doc["keypoint_features"] = {{"rows", result.keypoint_features.rows()},
                              {"cols", result.keypoint_features.cols()},
                              {"mean", s.feature_mean},
                              {"stddev", s.feature_stddev},
                              {"min", s.feature_min},
                              {"max", s.feature_max}};
  doc["losses"] = {{"seg", s.seg_loss}, {"key", s.key_loss}};
  return doc.dump(2) + "\n";
}

std::string timings_json(const PipelineResult& result) {
  nlohmann::json doc = nlohmann::json::array();
  double total = 0.0;
  for (const auto& t : result.timings) {
    doc.push_back({{"stage", t.stage}, {"ms", t.ms}});
    total += t.ms;
  }
  return nlohmann::json{{"stages", doc}, {"total_ms", total}}.dump(2) + "\n";
}

}  // namespace voxpoint
