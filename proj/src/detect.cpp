#include "voxpoint/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "voxpoint/errors.hpp"
#include "voxpoint/sampling.hpp"

namespace voxpoint {

void LossConfig::validate() const {
  if (!(alpha_cls > 0.0 && alpha_loc > 0.0 && alpha_dir > 0.0)) {
    throw ArgumentError("LossConfig: term weights must be positive");
  }
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ArgumentError("LossConfig: focal alpha in (0,1)");
  if (!(focal_gamma >= 0.0)) throw ArgumentError("LossConfig: focal gamma must be non-negative");
  if (!(smooth_l1_beta > 0.0)) throw ArgumentError("LossConfig: smooth-L1 beta must be positive");
  if (!(fg_iou_threshold > 0.0 && fg_iou_threshold < 1.0)) {
    throw ArgumentError("LossConfig: foreground IoU threshold must lie in (0,1)");
  }
  if (roi_samples == 0) throw ArgumentError("LossConfig: roi_samples must be positive");
}

double focal_loss(double p, int y, double alpha, double gamma) {
  const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
  const double pt = y == 1 ? pc : 1.0 - pc;
  const double at = y == 1 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * a * a / beta : a - 0.5 * beta;
}

double sine_error_loss(double pred_yaw, double target_yaw, double beta) {
  return smooth_l1(std::sin(pred_yaw - target_yaw), beta);
}

int direction_bin(double yaw) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::fmod(yaw, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w >= std::numbers::pi ? 1 : 0;
}

double direction_loss(double p_bin1, double target_yaw) {
  return bce(p_bin1, direction_bin(target_yaw));
}

double corner_loss(const Box3D& pred, const Box3D& target, double beta) {
  const auto pc = box_corners(pred);
  Box3D flipped = target;
  flipped.yaw = normalize_yaw(target.yaw + std::numbers::pi);
  const auto mean_loss = [&](const Box3D& t) {
    const auto tc = box_corners(t);
    double sum = 0.0;
    for (std::size_t i = 0; i < 8; ++i) sum += smooth_l1(norm(pc[i] - tc[i]), beta);
    return sum / 8.0;
  };
  return std::min(mean_loss(target), mean_loss(flipped));
}

double keypoint_reweight_loss(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              const LossConfig& cfg) {
  if (scores.size() != labels.size()) {
    throw ShapeError("keypoint_reweight_loss: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) sum += focal_loss(scores[i], labels[i] ? 1 : 0, cfg);
  return sum / static_cast<double>(scores.size());
}

double rcnn_cls_target(double iou) { return std::clamp((iou - 0.25) / 0.5, 0.0, 1.0); }

double rcnn_cls_loss(double p, double iou) { return bce(p, rcnn_cls_target(iou)); }

ComposedLoss compose_losses(const LossParts& parts, const LossConfig& cfg) {
  for (double v : {parts.seg, parts.rpn_cls, parts.rpn_loc, parts.rpn_dir, parts.rcnn_cls,
                   parts.rcnn_loc, parts.rcnn_corner, parts.key}) {
    if (!std::isfinite(v)) throw ArgumentError("compose_losses: non-finite loss component");
  }
  ComposedLoss out;
  out.rpn = cfg.alpha_cls * parts.rpn_cls + cfg.alpha_loc * parts.rpn_loc + cfg.alpha_dir * parts.rpn_dir;
  out.rcnn = parts.rcnn_cls + parts.rcnn_loc + parts.rcnn_corner;
  out.total = parts.seg + out.rpn + out.rcnn + parts.key;
  return out;
}

void AnchorSpec::validate() const {
  for (const auto& s : sizes) {
    if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) throw ArgumentError("AnchorSpec: sizes must be positive");
  }
  if (stride <= 0) throw ArgumentError("AnchorSpec: stride must be positive");
}

std::vector<Box3D> generate_anchors(const AnchorSpec& spec, const GridSpec& grid) {
  spec.validate();
  const auto dims = grid.strided_dims(spec.stride);
  const auto cols = static_cast<std::size_t>(dims[0]);
  const auto rows = static_cast<std::size_t>(dims[1]);
  std::vector<Box3D> anchors;
  anchors.reserve(kNumClasses * spec.yaws.size() * rows * cols);
  for (std::size_t cls = 0; cls < kNumClasses; ++cls) {
    for (double yaw : spec.yaws) {
      for (std::size_t v = 0; v < rows; ++v) {
        for (std::size_t u = 0; u < cols; ++u) {
          const Vec3 c = voxel_center({static_cast<std::int32_t>(u), static_cast<std::int32_t>(v), 0},
                                      grid, spec.stride);
          Box3D b;
          b.cx = c.x;
          b.cy = c.y;
          b.cz = spec.z_centers[cls];
          b.l = spec.sizes[cls].x;
          b.w = spec.sizes[cls].y;
          b.h = spec.sizes[cls].z;
          b.yaw = normalize_yaw(yaw);
          b.cls = static_cast<ObjectClass>(cls);
          anchors.push_back(b);
        }
      }
    }
  }
  return anchors;
}

RoiAssignment assign_roi_targets(std::span<const Proposal> proposals, std::span<const Box3D> gt,
                                 const LossConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RoiAssignment out;
  out.max_iou.assign(proposals.size(), 0.0);
  out.argmax_gt.assign(proposals.size(), -1);
  std::vector<std::size_t> fg;
  std::vector<std::size_t> bg;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double iou = iou3d(proposals[p].box, gt[g]);
      if (out.argmax_gt[p] < 0 || iou > out.max_iou[p]) {
        out.max_iou[p] = iou;
        out.argmax_gt[p] = static_cast<int>(g);
      }
    }
    (out.max_iou[p] >= cfg.fg_iou_threshold ? fg : bg).push_back(p);
  }
  std::mt19937_64 engine(seed);
  std::shuffle(fg.begin(), fg.end(), engine);
  std::shuffle(bg.begin(), bg.end(), engine);
  const std::size_t fg_take = std::min(fg.size(), cfg.roi_samples / 2);
  const std::size_t bg_take = std::min(bg.size(), cfg.roi_samples - fg_take);
  for (std::size_t i = 0; i < fg_take; ++i) {
    out.sampled.push_back(fg[i]);
    out.foreground.push_back(true);
    out.matched_gt.push_back(out.argmax_gt[fg[i]]);
  }
  for (std::size_t i = 0; i < bg_take; ++i) {
    out.sampled.push_back(bg[i]);
    out.foreground.push_back(false);
    out.matched_gt.push_back(out.max_iou[bg[i]] > 0.0 ? out.argmax_gt[bg[i]] : -1);
  }
  return out;
}

std::vector<std::size_t> nms(std::span<const Proposal> proposals, double iou_threshold,
                             std::size_t keep_top) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw ArgumentError("nms: IoU threshold must lie in [0, 1]");
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proposals[a].score > proposals[b].score;
  });
  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    if (keep.size() >= keep_top) break;
    bool suppressed = false;
    for (std::size_t k : keep) {
      if (bev_rotated_iou(proposals[idx].box, proposals[k].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(idx);
  }
  return keep;
}

}  // namespace voxpoint
