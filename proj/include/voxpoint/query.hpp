#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "voxpoint/voxelize.hpp"

namespace voxpoint {

struct QueryConfig {
  int range = 4;                 // I: offsets span [-I, +I] per axis
  std::size_t max_samples = 16;
  int manhattan_threshold = 4;
  double ball_radius = 1.6;      // meters

  /// Throws ArgumentError if range < 1, max_samples < 1, or the threshold is
  /// outside [0, 3 * range].
  void validate() const;
};

/// One neighbor of a keypoint. `feature` views the owning SparseVoxelMap and
/// is valid as long as that map is alive. `offset` is the voxel center minus
/// the keypoint, in strided voxel units.
struct Neighbor {
  VoxelCoord coord;
  std::size_t voxel_index = 0;
  std::span<const double> feature;
  Vec3 offset;
};
using NeighborSet = std::vector<Neighbor>;

/// Per-call instrumentation.
struct QueryStats {
  std::uint64_t candidates_visited = 0;
};

/// Exhaustive Euclidean query: every occupied voxel whose center lies within
/// ball_radius of the keypoint, sorted by ascending distance then coordinate,
/// truncated to max_samples. Visits all N occupied voxels.
NeighborSet ball_query(Vec3 center, const SparseVoxelMap& map, const QueryConfig& cfg,
                       QueryStats* stats = nullptr);

/// Manhattan-distance voxel query. Offsets in [-I, I]^3 with |d|_1 <= threshold
/// are precomputed in ascending Manhattan distance, ties broken
/// lexicographically on (di, dj, dk); lookups stop after max_samples hits.
/// At most (2I + 1)^3 cells are probed per keypoint regardless of map size.
class VoxelQuery {
 public:
  explicit VoxelQuery(const QueryConfig& cfg);

  NeighborSet operator()(Vec3 center, const SparseVoxelMap& map, QueryStats* stats = nullptr) const;
  /// Query around an explicit center voxel.
  NeighborSet around(VoxelCoord center_voxel, Vec3 center, const SparseVoxelMap& map,
                     QueryStats* stats = nullptr) const;

  std::span<const VoxelCoord> offsets() const noexcept { return offsets_; }
  const QueryConfig& config() const noexcept { return cfg_; }

 private:
  QueryConfig cfg_;
  std::vector<VoxelCoord> offsets_;
};

/// Convenience wrapper that builds the offset table on every call.
NeighborSet voxel_query(Vec3 center, const SparseVoxelMap& map, const QueryConfig& cfg,
                        QueryStats* stats = nullptr);

/// Gathers neighbor rows [feature ; offset] into a matrix (used by aggregation).
FeatureMatrix neighbor_rows(const NeighborSet& set, std::size_t feat_dim);

}  // namespace voxpoint
