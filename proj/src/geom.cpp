#include "voxpoint/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kClipEps = 1e-9;

double cross(Vec2 o, Vec2 a, Vec2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 segment_line_intersection(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  // Point on segment pq crossing the infinite line ab.
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

double squared_distance(Vec3 a, Vec3 b) {
  const Vec3 d = a - b;
  return d.x * d.x + d.y * d.y + d.z * d.z;
}

void PointCloud::push_back(Vec3 p, std::span<const double> feat) {
  if (feat.size() != feat_dim_) {
    throw ShapeError("PointCloud: feature length " + std::to_string(feat.size()) +
                     " does not match cloud feature dimension " + std::to_string(feat_dim_));
  }
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
    throw ArgumentError("PointCloud: non-finite coordinate");
  }
  xyz_.push_back(p);
  feats_.insert(feats_.end(), feat.begin(), feat.end());
}

void PointCloud::reserve(std::size_t n) {
  xyz_.reserve(n);
  feats_.reserve(n * feat_dim_);
}

PointCloud PointCloud::select(std::span<const std::size_t> indices) const {
  PointCloud out(feat_dim_);
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(xyz_.at(i), feat(i));
  return out;
}

std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return "Car";
    case ObjectClass::kPedestrian: return "Pedestrian";
    case ObjectClass::kCyclist: return "Cyclist";
  }
  return "Car";
}

std::optional<ObjectClass> parse_class(std::string_view name) {
  if (name == "Car") return ObjectClass::kCar;
  if (name == "Pedestrian") return ObjectClass::kPedestrian;
  if (name == "Cyclist") return ObjectClass::kCyclist;
  return std::nullopt;
}

double normalize_yaw(double yaw) {
  double y = std::fmod(yaw + kPi, 2.0 * kPi);
  if (y < 0.0) y += 2.0 * kPi;
  y -= kPi;
  // fmod rounding can land exactly on +pi
  if (y >= kPi) y -= 2.0 * kPi;
  return y;
}

bool Box3D::valid() const {
  const bool finite = std::isfinite(cx) && std::isfinite(cy) && std::isfinite(cz) &&
                      std::isfinite(l) && std::isfinite(w) && std::isfinite(h) &&
                      std::isfinite(yaw);
  return finite && l > 0.0 && w > 0.0 && h > 0.0 && yaw >= -kPi && yaw < kPi;
}

Vec3 to_box_frame(Vec3 p, const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double dx = p.x - b.cx;
  const double dy = p.y - b.cy;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - b.cz};
}

Vec3 from_box_frame(Vec3 local, const Box3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  return {c * local.x - s * local.y + b.cx, s * local.x + c * local.y + b.cy, local.z + b.cz};
}

bool point_in_box(Vec3 p, const Box3D& b) {
  const Vec3 q = to_box_frame(p, b);
  return std::abs(q.x) <= 0.5 * b.l && std::abs(q.y) <= 0.5 * b.w && std::abs(q.z) <= 0.5 * b.h;
}

std::array<Vec3, 8> box_corners(const Box3D& b) {
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  const double hh = 0.5 * b.h;
  constexpr std::array<std::array<double, 2>, 4> kSigns{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
  std::array<Vec3, 8> out;
  for (std::size_t face = 0; face < 2; ++face) {
    const double z = face == 0 ? -hh : hh;
    for (std::size_t k = 0; k < 4; ++k) {
      out[face * 4 + k] = from_box_frame({kSigns[k][0] * hl, kSigns[k][1] * hw, z}, b);
    }
  }
  return out;
}

std::array<Vec2, 4> bev_corners(const Box3D& b) {
  const auto c = box_corners(b);
  return {Vec2{c[0].x, c[0].y}, Vec2{c[1].x, c[1].y}, Vec2{c[2].x, c[2].y}, Vec2{c[3].x, c[3].y}};
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - a.y * b.x;
  }
  return 0.5 * std::abs(twice);
}

Polygon2 clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  Polygon2 output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const Polygon2 input = std::move(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2 cur = input[i];
      const Vec2 prev = input[(i + input.size() - 1) % input.size()];
      const double c_cur = cross(a, b, cur);
      const double c_prev = cross(a, b, prev);
      const bool in_cur = c_cur >= -kClipEps;
      const bool in_prev = c_prev >= -kClipEps;
      if (in_cur) {
        if (!in_prev) output.push_back(segment_line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (in_prev) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  if (output.size() < 3) output.clear();
  return output;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  // Clipping rounds differently depending on which polygon is the subject, so
  // pairs are clipped in a fixed order to keep the result exactly symmetric.
  const auto key = [](const Box3D& x) { return std::tie(x.cx, x.cy, x.l, x.w, x.yaw); };
  if (key(b) < key(a)) return bev_intersection_area(b, a);
  const auto pa = bev_corners(a);
  const auto pb = bev_corners(b);
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb) return 0.0;
  return polygon_area(clip_convex(pa, pb));
}

namespace {

// Footprint areas come from the same corner polygons the clipper sees, so an
// identical pair yields inter == area exactly.
double footprint_area(const Box3D& b) {
  const auto corners = bev_corners(b);
  return polygon_area(corners);
}

}  // namespace

double bev_rotated_iou(const Box3D& a, const Box3D& b) {
  if (!(a.l * a.w > 0.0) || !(b.l * b.w > 0.0)) return 0.0;
  const double area_a = footprint_area(a);
  const double area_b = footprint_area(b);
  const double inter = bev_intersection_area(a, b);
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou3d(const Box3D& a, const Box3D& b) {
  if (!(a.volume() > 0.0) || !(b.volume() > 0.0)) return 0.0;
  const double z_lo = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double z_hi = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double dz = z_hi - z_lo;
  if (dz <= 0.0) return 0.0;
  // Heights measured between the rounded faces, matching dz above.
  const double vol_a = footprint_area(a) * ((a.cz + 0.5 * a.h) - (a.cz - 0.5 * a.h));
  const double vol_b = footprint_area(b) * ((b.cz + 0.5 * b.h) - (b.cz - 0.5 * b.h));
  const double inter = bev_intersection_area(a, b) * dz;
  const double uni = vol_a + vol_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

AugmentParams AugmentParams::flip_x() { return {AugmentMode::kFlipX, 0.0, 1.0}; }

AugmentParams AugmentParams::rotate_z(double angle) {
  if (!(angle >= -kPi / 4.0 && angle <= kPi / 4.0)) {
    throw ArgumentError("rotate_z: angle must lie in [-pi/4, pi/4]");
  }
  return {AugmentMode::kRotateZ, angle, 1.0};
}

AugmentParams AugmentParams::scale(double factor) {
  if (!(factor >= 0.95 && factor <= 1.05)) {
    throw ArgumentError("scale: factor must lie in [0.95, 1.05]");
  }
  return {AugmentMode::kScale, 0.0, factor};
}

Vec3 augment_point(Vec3 p, const AugmentParams& params) {
  switch (params.mode) {
    case AugmentMode::kFlipX:
      return {p.x, -p.y, p.z};
    case AugmentMode::kRotateZ: {
      const double c = std::cos(params.angle);
      const double s = std::sin(params.angle);
      return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
    }
    case AugmentMode::kScale:
      return p * params.factor;
  }
  return p;
}

Box3D augment_box(const Box3D& b, const AugmentParams& params) {
  Box3D out = b;
  const Vec3 c = augment_point(b.center(), params);
  out.cx = c.x;
  out.cy = c.y;
  out.cz = c.z;
  switch (params.mode) {
    case AugmentMode::kFlipX:
      out.yaw = normalize_yaw(-b.yaw);
      break;
    case AugmentMode::kRotateZ:
      out.yaw = normalize_yaw(b.yaw + params.angle);
      break;
    case AugmentMode::kScale:
      out.l *= params.factor;
      out.w *= params.factor;
      out.h *= params.factor;
      break;
  }
  return out;
}

std::pair<PointCloud, std::vector<Box3D>> augment(const PointCloud& cloud,
                                                  std::span<const Box3D> boxes,
                                                  const AugmentParams& params) {
  PointCloud out_cloud(cloud.feat_dim());
  out_cloud.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out_cloud.push_back(augment_point(cloud.xyz(i), params), cloud.feat(i));
  }
  std::vector<Box3D> out_boxes;
  out_boxes.reserve(boxes.size());
  for (const auto& b : boxes) out_boxes.push_back(augment_box(b, params));
  return {std::move(out_cloud), std::move(out_boxes)};
}

}  // namespace voxpoint
