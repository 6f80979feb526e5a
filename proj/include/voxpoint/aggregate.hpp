#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "voxpoint/geom.hpp"
#include "voxpoint/matrix.hpp"
#include "voxpoint/mlp.hpp"
#include "voxpoint/query.hpp"
#include "voxpoint/voxelize.hpp"

namespace voxpoint {

/// Single-head projections: W_q, W_k are (d_k x d_f), W_v is (d_v x d_f), row-major.
struct AttentionWeights {
  std::size_t d_f = 0;
  std::size_t d_k = 0;
  std::size_t d_v = 0;
  std::vector<double> w_q;
  std::vector<double> w_k;
  std::vector<double> w_v;

  void validate() const;
  friend bool operator==(const AttentionWeights&, const AttentionWeights&) = default;
};

/// Attention output plus the weight matrix (row i = softmax weights of query i).
struct AttentionResult {
  FeatureMatrix output;   // N x (d_v + d_f): [V_hat_i ; F_i]
  FeatureMatrix weights;  // N x N
};

/// Q = W_q F, K = W_k F, V = W_v F; weights_i = softmax(K^T Q_i / sqrt(d_k));
/// V_hat_i = sum_m weights_i^m V^m. The weighted value is concatenated with
/// the original feature.
AttentionResult attention_forward(const FeatureMatrix& f, const AttentionWeights& w);

/// Per-point linear map, inference-mode normalization, ReLU; added to its
/// input when widths agree.
struct ResidualBlock {
  DenseLayer linear;
  std::vector<double> scale;
  std::vector<double> shift;
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;

  void validate() const;
  friend bool operator==(const ResidualBlock&, const ResidualBlock&) = default;
};

struct ResidualPointNetWeights {
  std::vector<ResidualBlock> blocks;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;
  friend bool operator==(const ResidualPointNetWeights&, const ResidualPointNetWeights&) = default;
};

/// Blocks applied per point, then an element-wise max over the N points.
std::vector<double> residual_pointnet_forward(const FeatureMatrix& v, const ResidualPointNetWeights& w);

/// Dense BEV grid at stride 8. Cell (u, v) covers x in [x_min + u*sx, x_min + (u+1)*sx)
/// and y likewise, sx = 8 * voxel_x. Storage is row-major over (v, u), channels innermost.
class BevFeatureMap {
 public:
  BevFeatureMap(const GridSpec& spec, int stride, std::size_t channels);

  std::size_t cols() const noexcept { return cols_; }  // along x
  std::size_t rows() const noexcept { return rows_; }  // along y
  std::size_t channels() const noexcept { return channels_; }
  int stride() const noexcept { return stride_; }
  const GridSpec& spec() const noexcept { return spec_; }

  std::span<double> cell(std::size_t u, std::size_t v) noexcept {
    return {data_.data() + (v * cols_ + u) * channels_, channels_};
  }
  std::span<const double> cell(std::size_t u, std::size_t v) const noexcept {
    return {data_.data() + (v * cols_ + u) * channels_, channels_};
  }
  Vec2 cell_center(std::size_t u, std::size_t v) const;

 private:
  GridSpec spec_;
  int stride_;
  std::size_t cols_;
  std::size_t rows_;
  std::size_t channels_;
  std::vector<double> data_;
};

/// Collapses a voxel map into BEV by stacking the z slices as channels:
/// channel (k * feat_dim + c) of cell (i, j) holds feature c of voxel (i, j, k).
BevFeatureMap bev_from_voxels(const SparseVoxelMap& map);

/// Bilinear interpolation between the four surrounding cell centers; cells
/// outside the grid read as zero. Throws OutOfRangeError outside the x/y range.
std::vector<double> bev_bilinear_sample(const BevFeatureMap& map, double x, double y);

/// Attention followed by the residual PointNet for one neighbor branch.
struct BranchWeights {
  AttentionWeights attention;
  ResidualPointNetWeights pointnet;
};

/// Branch output: zero vector of the PointNet output width for an empty set.
std::vector<double> aggregate_branch(const FeatureMatrix& rows, const BranchWeights& w);

inline constexpr std::size_t kVoxelBranches = 4;  // strides 1, 2, 4, 8
inline constexpr std::size_t kBranches = kVoxelBranches + 1;

/// Concatenated keypoint descriptor and where each part lives in it.
struct KeypointFeature {
  std::vector<double> values;
  std::array<std::size_t, kBranches + 1> part_offsets{};  // stride1..8, raw, bev start
};

/// Neighbor rows per branch (strides 1, 2, 4, 8, then raw points); each row is
/// [feature ; relative offset]. Parts are concatenated in that order followed
/// by the BEV sample at the keypoint's (x, y).
KeypointFeature assemble_keypoint_feature(Vec3 keypoint,
                                          std::span<const FeatureMatrix, kBranches> branch_rows,
                                          const BevFeatureMap& bev,
                                          std::span<const BranchWeights, kBranches> weights);

struct RoiGridConfig {
  std::size_t grid = 6;
  std::array<double, 2> radii{0.6, 0.8};
  std::size_t output_dim = 256;

  std::size_t grid_points() const { return grid * grid * grid; }
  void validate() const;
};

/// One shared perceptron per radius over rows [f_i ; offset], then a 2-layer
/// head mapping the flattened grid feature to cfg.output_dim.
struct RoiGridWeights {
  std::array<MlpWeights, 2> group_mlps;
  MlpWeights head;
};

/// Cell centers of the grid x grid x grid subdivision, x-major then y then z,
/// in world coordinates.
std::vector<Vec3> roi_grid_points(const Box3D& proposal, std::size_t grid);

/// Flattened pre-head grid feature: for every grid point and radius, keypoints
/// with |p - g| < r are grouped as [f_i ; R(-yaw)(p_i - g)] (offset expressed
/// in the proposal frame), transformed, max-pooled (zero if empty).
std::vector<double> roi_grid_feature(const Box3D& proposal, std::span<const Vec3> keypoints,
                                     const FeatureMatrix& features, const RoiGridConfig& cfg,
                                     const RoiGridWeights& w);

/// roi_grid_feature followed by the head (ReLU on both layers).
std::vector<double> roi_grid_pool(const Box3D& proposal, std::span<const Vec3> keypoints,
                                  const FeatureMatrix& features, const RoiGridConfig& cfg,
                                  const RoiGridWeights& w);

}  // namespace voxpoint
