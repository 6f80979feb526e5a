#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "voxpoint/geom.hpp"
#include "voxpoint/matrix.hpp"

namespace voxpoint {

/// Axis-aligned point-cloud range, voxel size and derived grid dimensions.
class GridSpec {
 public:
  /// Throws ArgumentError unless max > min and voxel sizes are positive.
  GridSpec(Vec3 range_min, Vec3 range_max, Vec3 voxel_size);

  /// KITTI front-view range [0,70.4] x [-40,40] x [-3,1] m, voxels 0.05 x 0.05 x 0.1 m.
  static GridSpec kitti();

  Vec3 range_min() const noexcept { return min_; }
  Vec3 range_max() const noexcept { return max_; }
  Vec3 voxel_size() const noexcept { return size_; }
  /// ceil(extent / size) per axis at stride 1: (L, W, H).
  std::array<std::int32_t, 3> dims() const noexcept { return dims_; }
  /// ceil(dims / stride) per axis.
  std::array<std::int32_t, 3> strided_dims(int stride) const;

  /// Half-open containment [min, max) on every axis.
  bool contains(Vec3 p) const noexcept;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  Vec3 min_;
  Vec3 max_;
  Vec3 size_;
  std::array<std::int32_t, 3> dims_{};
};

struct VoxelCoord {
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  /// Lexicographic on (i, j, k).
  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

int manhattan_distance(VoxelCoord a, VoxelCoord b);

/// Retains points inside [min, max) on every axis, preserving order.
PointCloud crop_to_range(const PointCloud& cloud, const GridSpec& spec);

/// floor((p - min) / (voxel_size * stride)) per axis, clamped to the strided
/// dims. Throws OutOfRangeError if p is outside the range.
VoxelCoord point_to_voxel(Vec3 p, const GridSpec& spec, int stride);

/// World-space center of a voxel at the given stride.
Vec3 voxel_center(VoxelCoord c, const GridSpec& spec, int stride);

/// Sparse voxel grid at one stride. Entries are kept in insertion order and
/// looked up through a hash map keyed by the packed coordinate
/// k * Lc * Wc + j * Lc + i, where (Lc, Wc, Hc) are the strided dims.
class SparseVoxelMap {
 public:
  SparseVoxelMap(const GridSpec& spec, int stride, std::size_t feat_dim);

  int stride() const noexcept { return stride_; }
  std::size_t feat_dim() const noexcept { return features_.cols(); }
  std::size_t size() const noexcept { return coords_.size(); }
  bool empty() const noexcept { return coords_.empty(); }
  std::array<std::int32_t, 3> dims() const noexcept { return dims_; }
  const GridSpec& spec() const noexcept { return spec_; }

  bool in_bounds(VoxelCoord c) const noexcept;
  std::uint64_t pack(VoxelCoord c) const noexcept;

  /// Inserts a voxel. Throws ArgumentError on duplicates or out-of-bounds
  /// coordinates, ShapeError on a feature-length mismatch.
  std::size_t insert(VoxelCoord c, std::span<const double> feature, std::uint32_t point_count);

  /// Index of the voxel, if occupied. Out-of-bounds coordinates are never occupied.
  std::optional<std::size_t> find(VoxelCoord c) const;

  VoxelCoord coord(std::size_t idx) const noexcept { return coords_[idx]; }
  std::span<const double> feature(std::size_t idx) const noexcept { return features_.row(idx); }
  std::uint32_t point_count(std::size_t idx) const noexcept { return counts_[idx]; }
  std::span<const VoxelCoord> coords() const noexcept { return coords_; }
  const FeatureMatrix& features() const noexcept { return features_; }

 private:
  GridSpec spec_;
  int stride_;
  std::array<std::int32_t, 3> dims_;
  std::vector<VoxelCoord> coords_;
  FeatureMatrix features_;
  std::vector<std::uint32_t> counts_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

/// Mean voxel feature encoder: each occupied voxel stores the mean of its
/// points' (xyz ++ feat) vectors and the point count. Points outside the range
/// are skipped (callers normally crop first). Voxels appear in ascending
/// packed-key order.
SparseVoxelMap voxelize_mean(const PointCloud& cloud, const GridSpec& spec, int stride);

}  // namespace voxpoint
