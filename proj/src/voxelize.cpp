#include "voxpoint/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

std::int32_t axis_cells(double extent, double size) {
  const double q = extent / size;
  const double r = std::round(q);
  // 70.4 / 0.05 style ratios that land a hair above an integer stay exact.
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, r)) return static_cast<std::int32_t>(r);
  return static_cast<std::int32_t>(std::ceil(q));
}

void check_stride(int stride) {
  if (stride <= 0) throw ArgumentError("stride must be positive, got " + std::to_string(stride));
}

}  // namespace

GridSpec::GridSpec(Vec3 range_min, Vec3 range_max, Vec3 voxel_size)
    : min_(range_min), max_(range_max), size_(voxel_size) {
  const std::array<double, 3> lo{min_.x, min_.y, min_.z};
  const std::array<double, 3> hi{max_.x, max_.y, max_.z};
  const std::array<double, 3> sz{size_.x, size_.y, size_.z};
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(std::isfinite(lo[a]) && std::isfinite(hi[a]) && hi[a] > lo[a])) {
      throw ArgumentError("GridSpec: range max must exceed min on every axis");
    }
    if (!(std::isfinite(sz[a]) && sz[a] > 0.0)) {
      throw ArgumentError("GridSpec: voxel sizes must be positive");
    }
    dims_[a] = axis_cells(hi[a] - lo[a], sz[a]);
  }
}

GridSpec GridSpec::kitti() {
  return GridSpec({0.0, -40.0, -3.0}, {70.4, 40.0, 1.0}, {0.05, 0.05, 0.1});
}

std::array<std::int32_t, 3> GridSpec::strided_dims(int stride) const {
  check_stride(stride);
  std::array<std::int32_t, 3> out{};
  for (std::size_t a = 0; a < 3; ++a) out[a] = (dims_[a] + stride - 1) / stride;
  return out;
}

bool GridSpec::contains(Vec3 p) const noexcept {
  return p.x >= min_.x && p.x < max_.x && p.y >= min_.y && p.y < max_.y && p.z >= min_.z &&
         p.z < max_.z;
}

int manhattan_distance(VoxelCoord a, VoxelCoord b) {
  return std::abs(a.i - b.i) + std::abs(a.j - b.j) + std::abs(a.k - b.k);
}

PointCloud crop_to_range(const PointCloud& cloud, const GridSpec& spec) {
  PointCloud out(cloud.feat_dim());
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (spec.contains(cloud.xyz(i))) out.push_back(cloud.xyz(i), cloud.feat(i));
  }
  return out;
}

VoxelCoord point_to_voxel(Vec3 p, const GridSpec& spec, int stride) {
  if (!spec.contains(p)) throw OutOfRangeError("point_to_voxel: point outside the grid range");
  const auto dims = spec.strided_dims(stride);
  const Vec3 lo = spec.range_min();
  const Vec3 sz = spec.voxel_size();
  const auto cell = [stride](double v, double min, double size, std::int32_t dim) {
    const auto idx = static_cast<std::int32_t>(std::floor((v - min) / (size * stride)));
    return std::clamp(idx, std::int32_t{0}, dim - 1);
  };
  return {cell(p.x, lo.x, sz.x, dims[0]), cell(p.y, lo.y, sz.y, dims[1]),
          cell(p.z, lo.z, sz.z, dims[2])};
}

Vec3 voxel_center(VoxelCoord c, const GridSpec& spec, int stride) {
  check_stride(stride);
  const Vec3 lo = spec.range_min();
  const Vec3 sz = spec.voxel_size() * static_cast<double>(stride);
  return {lo.x + (c.i + 0.5) * sz.x, lo.y + (c.j + 0.5) * sz.y, lo.z + (c.k + 0.5) * sz.z};
}

SparseVoxelMap::SparseVoxelMap(const GridSpec& spec, int stride, std::size_t feat_dim)
    : spec_(spec), stride_(stride), dims_(spec.strided_dims(stride)), features_(0, feat_dim) {}

bool SparseVoxelMap::in_bounds(VoxelCoord c) const noexcept {
  return c.i >= 0 && c.j >= 0 && c.k >= 0 && c.i < dims_[0] && c.j < dims_[1] && c.k < dims_[2];
}

std::uint64_t SparseVoxelMap::pack(VoxelCoord c) const noexcept {
  const auto lc = static_cast<std::uint64_t>(dims_[0]);
  const auto wc = static_cast<std::uint64_t>(dims_[1]);
  return static_cast<std::uint64_t>(c.k) * lc * wc + static_cast<std::uint64_t>(c.j) * lc +
         static_cast<std::uint64_t>(c.i);
}

std::size_t SparseVoxelMap::insert(VoxelCoord c, std::span<const double> feature,
                                   std::uint32_t point_count) {
  if (!in_bounds(c)) throw ArgumentError("SparseVoxelMap: coordinate outside strided dims");
  if (feature.size() != features_.cols()) {
    throw ShapeError("SparseVoxelMap: feature length mismatch");
  }
  const auto [it, inserted] = index_.try_emplace(pack(c), static_cast<std::uint32_t>(coords_.size()));
  if (!inserted) throw ArgumentError("SparseVoxelMap: duplicate voxel coordinate");
  coords_.push_back(c);
  features_.append_row(feature);
  counts_.push_back(point_count);
  return it->second;
}

std::optional<std::size_t> SparseVoxelMap::find(VoxelCoord c) const {
  if (!in_bounds(c)) return std::nullopt;
  const auto it = index_.find(pack(c));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseVoxelMap voxelize_mean(const PointCloud& cloud, const GridSpec& spec, int stride) {
  const std::size_t width = 3 + cloud.feat_dim();
  SparseVoxelMap map(spec, stride, width);

  // Bucket points by packed key; buckets[b] lists its points.
  std::vector<std::pair<std::uint64_t, VoxelCoord>> keys;
  std::vector<std::vector<std::uint32_t>> members;
  std::unordered_map<std::uint64_t, std::uint32_t> slot;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const Vec3 xyz = cloud.xyz(p);
    if (!spec.contains(xyz)) continue;
    const VoxelCoord c = point_to_voxel(xyz, spec, stride);
    const std::uint64_t key = map.pack(c);
    const auto [it, fresh] = slot.try_emplace(key, static_cast<std::uint32_t>(keys.size()));
    if (fresh) {
      keys.emplace_back(key, c);
      members.emplace_back();
    }
    members[it->second].push_back(static_cast<std::uint32_t>(p));
  }

  std::vector<std::uint32_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a].first < keys[b].first; });

  // Each channel is summed in ascending value order, so the mean does not
  // depend on the input point order.
  std::vector<double> mean(width);
  std::vector<double> values;
  for (std::uint32_t b : order) {
    const auto& pts = members[b];
    for (std::size_t d = 0; d < width; ++d) {
      values.clear();
      for (std::uint32_t p : pts) {
        const Vec3 xyz = cloud.xyz(p);
        values.push_back(d == 0 ? xyz.x : d == 1 ? xyz.y : d == 2 ? xyz.z : cloud.feat(p)[d - 3]);
      }
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      mean[d] = sum / static_cast<double>(pts.size());
    }
    map.insert(keys[b].second, mean, static_cast<std::uint32_t>(pts.size()));
  }
  return map;
}

}  // namespace voxpoint
