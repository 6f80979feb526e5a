#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace voxpoint {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double norm(Vec3 v);
double squared_distance(Vec3 a, Vec3 b);

/// N points with xyz in meters and a uniform-length feature vector each
/// (e.g. reflection intensity). Features are stored flat, row-major.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::size_t feat_dim) : feat_dim_(feat_dim) {}

  std::size_t size() const noexcept { return xyz_.size(); }
  bool empty() const noexcept { return xyz_.empty(); }
  std::size_t feat_dim() const noexcept { return feat_dim_; }

  /// Throws ShapeError on feature length mismatch, ArgumentError on non-finite coordinates.
  void push_back(Vec3 p, std::span<const double> feat = {});
  void reserve(std::size_t n);

  Vec3 xyz(std::size_t i) const noexcept { return xyz_[i]; }
  std::span<const double> feat(std::size_t i) const noexcept {
    return {feats_.data() + i * feat_dim_, feat_dim_};
  }
  std::span<const Vec3> positions() const noexcept { return xyz_; }
  std::span<Vec3> positions() noexcept { return xyz_; }
  const std::vector<double>& feats() const noexcept { return feats_; }

  /// Subset in the given index order.
  PointCloud select(std::span<const std::size_t> indices) const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::size_t feat_dim_ = 0;
  std::vector<Vec3> xyz_;
  std::vector<double> feats_;
};

enum class ObjectClass { kCar = 0, kPedestrian = 1, kCyclist = 2 };
inline constexpr std::size_t kNumClasses = 3;

std::string_view class_name(ObjectClass c);
std::optional<ObjectClass> parse_class(std::string_view name);

/// Wraps an angle into [-pi, pi).
double normalize_yaw(double yaw);

/// Oriented box: center, size (length along heading, width, height), yaw about +Z.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double yaw = 0.0;
  ObjectClass cls = ObjectClass::kCar;

  Vec3 center() const { return {cx, cy, cz}; }
  double volume() const { return l * w * h; }
  /// Sizes strictly positive, all fields finite, yaw in [-pi, pi).
  bool valid() const;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Point expressed in the box frame (translate by -center, rotate by -yaw).
Vec3 to_box_frame(Vec3 p, const Box3D& b);
Vec3 from_box_frame(Vec3 local, const Box3D& b);

/// Inclusive on the faces: |x'| <= l/2, |y'| <= w/2, |z'| <= h/2.
bool point_in_box(Vec3 p, const Box3D& b);

/// Corner order (box frame): bottom face counter-clockwise starting at
/// (+l/2, +w/2, -h/2), i.e. (+,+), (-,+), (-,-), (+,-); then the top face
/// (+h/2) in the same order.
std::array<Vec3, 8> box_corners(const Box3D& b);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};
using Polygon2 = std::vector<Vec2>;

/// The four BEV corners of the box, counter-clockwise.
std::array<Vec2, 4> bev_corners(const Box3D& b);
/// Shoelace area (absolute value).
double polygon_area(std::span<const Vec2> poly);
/// Intersection of two convex counter-clockwise polygons (Sutherland-Hodgman).
Polygon2 clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);
/// Rotated BEV IoU in [0, 1]; zero-area rectangles give 0.
double bev_rotated_iou(const Box3D& a, const Box3D& b);
/// BEV intersection area times vertical overlap over union of volumes.
double iou3d(const Box3D& a, const Box3D& b);

enum class AugmentMode { kFlipX, kRotateZ, kScale };

/// Use the named constructors; they validate the ranges used in training
/// (rotation in [-pi/4, pi/4], scale factor in [0.95, 1.05]).
struct AugmentParams {
  AugmentMode mode = AugmentMode::kFlipX;
  double angle = 0.0;
  double factor = 1.0;

  static AugmentParams flip_x();
  static AugmentParams rotate_z(double angle);
  static AugmentParams scale(double factor);
};

/// Mirror y -> -y (yaw -> -yaw), rotate about Z, or scale uniformly.
/// Features are untouched; point-in-box membership is preserved.
std::pair<PointCloud, std::vector<Box3D>> augment(const PointCloud& cloud,
                                                  std::span<const Box3D> boxes,
                                                  const AugmentParams& params);
Vec3 augment_point(Vec3 p, const AugmentParams& params);
Box3D augment_box(const Box3D& b, const AugmentParams& params);

}  // namespace voxpoint
