#include "voxpoint/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(unit() * static_cast<double>(n)); }
  double normal() {
    // Box-Muller keeps the stream identical across standard libraries.
    const double u1 = std::max(unit(), 1e-300);
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Kept out of line: GCC 11 at -O3 vectorizes the y/z lanes of a point and drops the
// narrowing, leaving doubles that do not survive a float32 file round trip.
[[gnu::noinline]] double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Box3D random_object(Draw& d, const SceneGenConfig& cfg) {
  Box3D b;
  const double pick = d.unit();
  if (pick < 0.6) {
    b.cls = ObjectClass::kCar;
    b.l = 3.9 + d.range(-0.3, 0.3);
    b.w = 1.6 + d.range(-0.1, 0.1);
    b.h = 1.56 + d.range(-0.1, 0.1);
  } else if (pick < 0.8) {
    b.cls = ObjectClass::kPedestrian;
    b.l = 0.8 + d.range(-0.1, 0.1);
    b.w = 0.6 + d.range(-0.05, 0.05);
    b.h = 1.73 + d.range(-0.1, 0.1);
  } else {
    b.cls = ObjectClass::kCyclist;
    b.l = 1.76 + d.range(-0.1, 0.1);
    b.w = 0.6 + d.range(-0.05, 0.05);
    b.h = 1.73 + d.range(-0.1, 0.1);
  }
  const double margin = std::min(3.0, 0.25 * std::min(cfg.x_extent, cfg.y_extent));
  b.cx = d.range(cfg.x_min + margin, cfg.x_min + cfg.x_extent - margin);
  b.cy = d.range(cfg.y_min + margin, cfg.y_min + cfg.y_extent - margin);
  b.cz = cfg.ground_z + 0.5 * b.h;
  b.yaw = normalize_yaw(d.range(-std::numbers::pi, std::numbers::pi));
  return b;
}

bool separated(const Box3D& a, const Box3D& b) {
  const double ra = 0.5 * std::hypot(a.l, a.w);
  const double rb = 0.5 * std::hypot(b.l, b.w);
  return std::hypot(a.cx - b.cx, a.cy - b.cy) > ra + rb + 0.5;
}

}  // namespace

void SceneGenConfig::validate() const {
  if (!(fg_fraction >= 0.0 && fg_fraction <= 1.0)) throw ArgumentError("SceneGenConfig: fg_fraction must lie in [0, 1]");
  if (!(x_extent > 0.0 && y_extent > 0.0)) throw ArgumentError("SceneGenConfig: extents must be positive");
  if (!(clutter_fraction >= 0.0 && clutter_fraction <= 1.0)) {
    throw ArgumentError("SceneGenConfig: clutter_fraction must lie in [0, 1]");
  }
}

SceneGenConfig scaled_density(const SceneGenConfig& base, double factor) {
  SceneGenConfig out = base;
  out.x_extent = base.x_extent * factor;
  out.num_points = static_cast<std::size_t>(std::llround(static_cast<double>(base.num_points) * factor));
  out.num_objects = static_cast<std::size_t>(std::llround(static_cast<double>(base.num_objects) * factor));
  return out;
}

Scene generate_scene(const SceneGenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Draw d(seed);
  Scene scene;
  scene.frame_id = "synthetic-" + std::to_string(seed);
  scene.source = "synthetic";

  for (std::size_t o = 0, attempts = 0; o < cfg.num_objects && attempts < 200 * (cfg.num_objects + 1); ++attempts) {
    Box3D b = random_object(d, cfg);
    if (std::all_of(scene.gt_boxes.begin(), scene.gt_boxes.end(),
                    [&](const Box3D& other) { return separated(b, other); })) {
      scene.gt_boxes.push_back(b);
      ++o;
    }
  }

  const double x_hi = cfg.x_min + cfg.x_extent;
  const double y_hi = cfg.y_min + cfg.y_extent;
  const auto inside_extent = [&](Vec3 p) { return p.x >= cfg.x_min && p.x < x_hi && p.y >= cfg.y_min && p.y < y_hi; };
  const auto in_any_box = [&](Vec3 p) {
    return std::any_of(scene.gt_boxes.begin(), scene.gt_boxes.end(), [&](const Box3D& b) { return point_in_box(p, b); });
  };

  const std::size_t n_fg = scene.gt_boxes.empty()
                               ? 0
                               : static_cast<std::size_t>(std::llround(cfg.fg_fraction * static_cast<double>(cfg.num_points)));
  std::vector<Vec3> xyz;
  std::vector<double> intensity;
  xyz.reserve(cfg.num_points);

  for (std::size_t i = 0; i < n_fg; ++i) {
    const Box3D& b = scene.gt_boxes[i % scene.gt_boxes.size()];
    for (;;) {
      const Vec3 local{d.range(-0.48, 0.48) * b.l, d.range(-0.48, 0.48) * b.w, d.range(-0.48, 0.48) * b.h};
      const Vec3 w = from_box_frame(local, b);
      const Vec3 p{f32(w.x), f32(w.y), f32(w.z)};
      if (point_in_box(p, b) && inside_extent(p)) {
        xyz.push_back(p);
        break;
      }
    }
  }
  while (xyz.size() < cfg.num_points) {
    const double z = d.unit() < cfg.clutter_fraction ? cfg.ground_z + d.range(0.0, 2.5)
                                                     : cfg.ground_z + 0.03 * d.normal();
    const Vec3 p{f32(d.range(cfg.x_min, x_hi)), f32(d.range(cfg.y_min, y_hi)), f32(z)};
    if (inside_extent(p) && !in_any_box(p)) xyz.push_back(p);
  }

  std::vector<std::size_t> order(xyz.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[d.index(i)]);

  scene.cloud = PointCloud(1);
  scene.cloud.reserve(xyz.size());
  for (std::size_t i : order) {
    const double f = f32(d.unit());
    scene.cloud.push_back(xyz[i], std::span<const double>(&f, 1));
  }
  return scene;
}

}  // namespace voxpoint
