#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "voxpoint/geom.hpp"
#include "voxpoint/voxelize.hpp"

namespace voxpoint {

struct LossConfig {
  double alpha_cls = 1.0;  // RPN classification weight
  double alpha_loc = 2.0;  // RPN box regression weight
  double alpha_dir = 0.2;  // RPN direction weight
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double smooth_l1_beta = 1.0;
  double fg_iou_threshold = 0.55;
  std::size_t roi_samples = 128;

  void validate() const;
};

/// -alpha_t (1 - p_t)^gamma ln p_t with p clamped to [eps, 1 - eps].
double focal_loss(double p, int y, double alpha, double gamma);
inline double focal_loss(double p, int y, const LossConfig& cfg) {
  return focal_loss(p, y, cfg.focal_alpha, cfg.focal_gamma);
}

/// 0.5 x^2 / beta inside |x| < beta, |x| - 0.5 beta outside.
double smooth_l1(double x, double beta);

/// smooth_l1(sin(pred - target)); blind to a pi heading flip.
double sine_error_loss(double pred_yaw, double target_yaw, double beta);

/// Heading bin for the direction classifier: 1 when the yaw, wrapped into
/// [0, 2pi), is at least pi.
int direction_bin(double yaw);
/// BCE between the predicted probability of bin 1 and direction_bin(target).
double direction_loss(double p_bin1, double target_yaw);

/// Mean over the 8 corners of smooth_l1(|c_pred - c_target|), taking the
/// smaller of the target and the target turned by pi.
double corner_loss(const Box3D& pred, const Box3D& target, double beta);

/// Mean focal loss between keypoint scores and in-box labels; 0 for an empty set.
double keypoint_reweight_loss(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              const LossConfig& cfg);

/// Soft confidence target from IoU: clamp((iou - 0.25) / 0.5, 0, 1).
double rcnn_cls_target(double iou);
double rcnn_cls_loss(double p, double iou);

struct LossParts {
  double seg = 0.0;
  double rpn_cls = 0.0;
  double rpn_loc = 0.0;
  double rpn_dir = 0.0;
  double rcnn_cls = 0.0;
  double rcnn_loc = 0.0;
  double rcnn_corner = 0.0;
  double key = 0.0;
};

struct ComposedLoss {
  double rpn = 0.0;
  double rcnn = 0.0;
  double total = 0.0;
};

/// rpn = a1 cls + a2 loc + a3 dir; rcnn = cls + loc + corner;
/// total = seg + rpn + rcnn + key. Throws ArgumentError on non-finite parts.
ComposedLoss compose_losses(const LossParts& parts, const LossConfig& cfg);

struct AnchorSpec {
  std::array<Vec3, kNumClasses> sizes{Vec3{3.9, 1.6, 1.56}, Vec3{0.8, 0.6, 1.73}, Vec3{1.76, 0.6, 1.73}};
  // Box centers, not bottoms: every class stands on z = -1.78, so center = -1.78 + h / 2.
  std::array<double, kNumClasses> z_centers{-1.0, -0.915, -0.915};
  std::array<double, 2> yaws{0.0, 1.5707963267948966};
  int stride = 8;

  void validate() const;
};

/// One anchor per (class, yaw, BEV cell) at cell centers; ordered class-major,
/// then yaw, then row-major cells (y rows, x columns). Count is
/// 3 * 2 * (L/stride) * (W/stride).
std::vector<Box3D> generate_anchors(const AnchorSpec& spec, const GridSpec& grid);

struct Proposal {
  Box3D box;
  double score = 0.0;
};

struct RoiAssignment {
  std::vector<std::size_t> sampled;    // proposal indices, foreground first
  std::vector<bool> foreground;        // per sampled entry
  std::vector<int> matched_gt;         // per sampled entry, -1 when no gt overlaps
  std::vector<double> max_iou;         // per proposal (all of them)
  std::vector<int> argmax_gt;          // per proposal, -1 without ground truth
};

/// Foreground iff max 3D IoU >= cfg.fg_iou_threshold. Samples up to
/// cfg.roi_samples proposals with at most half foreground, seeded.
RoiAssignment assign_roi_targets(std::span<const Proposal> proposals, std::span<const Box3D> gt,
                                 const LossConfig& cfg, std::uint64_t seed);

/// Greedy score-descending suppression on rotated BEV IoU (suppress when
/// IoU > threshold), ties by index, stopping after keep_top boxes.
/// Returns indices into `proposals`.
std::vector<std::size_t> nms(std::span<const Proposal> proposals, double iou_threshold,
                             std::size_t keep_top);

}  // namespace voxpoint
