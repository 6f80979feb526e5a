#include "voxpoint/query.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <tuple>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

Vec3 offset_in_voxels(VoxelCoord c, Vec3 center, const SparseVoxelMap& map) {
  const Vec3 d = voxel_center(c, map.spec(), map.stride()) - center;
  const Vec3 sz = map.spec().voxel_size() * static_cast<double>(map.stride());
  return {d.x / sz.x, d.y / sz.y, d.z / sz.z};
}

}  // namespace

void QueryConfig::validate() const {
  if (range < 1) throw ArgumentError("QueryConfig: range I must be a positive integer");
  if (max_samples < 1) throw ArgumentError("QueryConfig: max_samples must be at least 1");
  if (manhattan_threshold < 0 || manhattan_threshold > 3 * range) {
    throw ArgumentError("QueryConfig: manhattan_threshold must lie in [0, 3I]");
  }
  if (!(ball_radius >= 0.0)) throw ArgumentError("QueryConfig: ball_radius must be non-negative");
}

NeighborSet ball_query(Vec3 center, const SparseVoxelMap& map, const QueryConfig& cfg,
                       QueryStats* stats) {
  struct Hit {
    double d2;
    VoxelCoord coord;
    std::size_t index;
  };
  const double r2 = cfg.ball_radius * cfg.ball_radius;
  std::vector<Hit> hits;
  const auto coords = map.coords();
  for (std::size_t v = 0; v < coords.size(); ++v) {
    const double d2 = squared_distance(voxel_center(coords[v], map.spec(), map.stride()), center);
    if (d2 <= r2) hits.push_back({d2, coords[v], v});
  }
  if (stats) stats->candidates_visited += coords.size();
  const auto keep = std::min(hits.size(), cfg.max_samples);
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    [](const Hit& a, const Hit& b) {
                      return std::tie(a.d2, a.coord) < std::tie(b.d2, b.coord);
                    });
  NeighborSet out;
  out.reserve(keep);
  for (std::size_t h = 0; h < keep; ++h) {
    const auto& hit = hits[h];
    out.push_back({hit.coord, hit.index, map.feature(hit.index), offset_in_voxels(hit.coord, center, map)});
  }
  return out;
}

VoxelQuery::VoxelQuery(const QueryConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int r = cfg_.range;
  for (int di = -r; di <= r; ++di) {
    for (int dj = -r; dj <= r; ++dj) {
      for (int dk = -r; dk <= r; ++dk) {
        if (std::abs(di) + std::abs(dj) + std::abs(dk) <= cfg_.manhattan_threshold) {
          offsets_.push_back({di, dj, dk});
        }
      }
    }
  }
  // Generation order is already lexicographic; a stable sort keeps it within
  // each Manhattan shell.
  std::stable_sort(offsets_.begin(), offsets_.end(), [](VoxelCoord a, VoxelCoord b) {
    return manhattan_distance(a, {}) < manhattan_distance(b, {});
  });
}

NeighborSet VoxelQuery::operator()(Vec3 center, const SparseVoxelMap& map, QueryStats* stats) const {
  return around(point_to_voxel(center, map.spec(), map.stride()), center, map, stats);
}

NeighborSet VoxelQuery::around(VoxelCoord center_voxel, Vec3 center, const SparseVoxelMap& map,
                               QueryStats* stats) const {
  NeighborSet out;
  out.reserve(cfg_.max_samples);
  std::uint64_t visited = 0;
  for (const VoxelCoord& d : offsets_) {
    const VoxelCoord c{center_voxel.i + d.i, center_voxel.j + d.j, center_voxel.k + d.k};
    ++visited;
    const auto idx = map.find(c);
    if (!idx) continue;
    out.push_back({c, *idx, map.feature(*idx), offset_in_voxels(c, center, map)});
    if (out.size() == cfg_.max_samples) break;
  }
  if (stats) stats->candidates_visited += visited;
  return out;
}

NeighborSet voxel_query(Vec3 center, const SparseVoxelMap& map, const QueryConfig& cfg,
                        QueryStats* stats) {
  return VoxelQuery(cfg)(center, map, stats);
}

FeatureMatrix neighbor_rows(const NeighborSet& set, std::size_t feat_dim) {
  FeatureMatrix rows(set.size(), feat_dim + 3);
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& n = set[r];
    if (n.feature.size() != feat_dim) throw ShapeError("neighbor_rows: feature width mismatch");
    auto dst = rows.row(r);
    std::copy(n.feature.begin(), n.feature.end(), dst.begin());
    dst[feat_dim] = n.offset.x;
    dst[feat_dim + 1] = n.offset.y;
    dst[feat_dim + 2] = n.offset.z;
  }
  return rows;
}

}  // namespace voxpoint
