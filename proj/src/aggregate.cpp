#include "voxpoint/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

// Sum of `values` taken in ascending order, so reordering the inputs
// (neighbor permutations) leaves the result bit-identical. `scratch` may alias `values`.
double order_free_sum(const std::vector<double>& values, std::vector<double>& scratch) {
  if (&scratch != &values) scratch.assign(values.begin(), values.end());
  std::sort(scratch.begin(), scratch.end());
  double acc = 0.0;
  for (double v : scratch) acc += v;
  return acc;
}

}  // namespace

void AttentionWeights::validate() const {
  if (d_f == 0 || d_k == 0 || d_v == 0) throw ShapeError("AttentionWeights: zero dimension");
  if (w_q.size() != d_k * d_f || w_k.size() != d_k * d_f || w_v.size() != d_v * d_f) {
    throw ShapeError("AttentionWeights: projection sizes inconsistent with (d_f, d_k, d_v)");
  }
}

AttentionResult attention_forward(const FeatureMatrix& f, const AttentionWeights& w) {
  w.validate();
  if (f.rows() == 0) throw ShapeError("attention_forward: need at least one feature vector");
  if (f.cols() != w.d_f) {
    throw ShapeError("attention_forward: features have width " + std::to_string(f.cols()) +
                     ", projections expect " + std::to_string(w.d_f));
  }
  const std::size_t n = f.rows();
  const auto project = [&](const std::vector<double>& mat, std::size_t out_dim) {
    FeatureMatrix out(n, out_dim);
    for (std::size_t r = 0; r < n; ++r) {
      const auto x = f.row(r);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* m = mat.data() + o * w.d_f;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.d_f; ++c) acc += m[c] * x[c];
        out(r, o) = acc;
      }
    }
    return out;
  };
  const FeatureMatrix q = project(w.w_q, w.d_k);
  const FeatureMatrix k = project(w.w_k, w.d_k);
  const FeatureMatrix v = project(w.w_v, w.d_v);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(w.d_k));

  AttentionResult res{FeatureMatrix(n, w.d_v + w.d_f), FeatureMatrix(n, n)};
  std::vector<double> logits(n);
  std::vector<double> terms;
  for (std::size_t i = 0; i < n; ++i) {
    const auto qi = q.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m) {
      const auto km = k.row(m);
      double dot = 0.0;
      for (std::size_t c = 0; c < w.d_k; ++c) dot += km[c] * qi[c];
      logits[m] = dot * inv_scale;
      peak = std::max(peak, logits[m]);
    }
    for (std::size_t m = 0; m < n; ++m) logits[m] = std::exp(logits[m] - peak);
    const double denom = order_free_sum(logits, terms);
    for (std::size_t m = 0; m < n; ++m) res.weights(i, m) = logits[m] / denom;
    auto out = res.output.row(i);
    for (std::size_t c = 0; c < w.d_v; ++c) {
      terms.clear();
      for (std::size_t m = 0; m < n; ++m) terms.push_back(res.weights(i, m) * v(m, c));
      out[c] = order_free_sum(terms, terms);
    }
    const auto fi = f.row(i);
    std::copy(fi.begin(), fi.end(), out.begin() + static_cast<std::ptrdiff_t>(w.d_v));
  }
  return res;
}

void ResidualBlock::validate() const {
  linear.validate();
  const std::size_t c = linear.out;
  if (scale.size() != c || shift.size() != c || mean.size() != c || var.size() != c) {
    throw ShapeError("ResidualBlock: normalization parameters must have one entry per output channel");
  }
  for (double v : var) {
    if (!(v + eps > 0.0)) throw ShapeError("ResidualBlock: variance + eps must be positive");
  }
}

std::size_t ResidualPointNetWeights::input_dim() const {
  return blocks.empty() ? 0 : blocks.front().linear.in;
}

std::size_t ResidualPointNetWeights::output_dim() const {
  return blocks.empty() ? 0 : blocks.back().linear.out;
}

void ResidualPointNetWeights::validate() const {
  if (blocks.empty()) throw ShapeError("ResidualPointNetWeights: no blocks");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].validate();
    if (b > 0 && blocks[b].linear.in != blocks[b - 1].linear.out) {
      throw ShapeError("ResidualPointNetWeights: block " + std::to_string(b) + " input width mismatch");
    }
  }
}

std::vector<double> residual_pointnet_forward(const FeatureMatrix& v, const ResidualPointNetWeights& w) {
  w.validate();
  if (v.rows() == 0) throw ShapeError("residual_pointnet_forward: need at least one vector");
  if (v.cols() != w.input_dim()) {
    throw ShapeError("residual_pointnet_forward: input width " + std::to_string(v.cols()) +
                     " but first block expects " + std::to_string(w.input_dim()));
  }
  std::vector<double> pooled(w.output_dim(), -std::numeric_limits<double>::infinity());
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const auto in = v.row(r);
    x.assign(in.begin(), in.end());
    for (const auto& block : w.blocks) {
      y.assign(block.linear.out, 0.0);
      block.linear.apply(x, y);
      for (std::size_t c = 0; c < y.size(); ++c) {
        const double normed = (y[c] - block.mean[c]) / std::sqrt(block.var[c] + block.eps);
        y[c] = std::max(block.scale[c] * normed + block.shift[c], 0.0);
      }
      if (y.size() == x.size()) {
        for (std::size_t c = 0; c < y.size(); ++c) x[c] += y[c];
      } else {
        x.swap(y);
      }
    }
    for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] = std::max(pooled[c], x[c]);
  }
  return pooled;
}

BevFeatureMap::BevFeatureMap(const GridSpec& spec, int stride, std::size_t channels)
    : spec_(spec), stride_(stride), channels_(channels) {
  const auto dims = spec.strided_dims(stride);
  cols_ = static_cast<std::size_t>(dims[0]);
  rows_ = static_cast<std::size_t>(dims[1]);
  data_.assign(cols_ * rows_ * channels_, 0.0);
}

Vec2 BevFeatureMap::cell_center(std::size_t u, std::size_t v) const {
  const Vec3 c = voxel_center({static_cast<std::int32_t>(u), static_cast<std::int32_t>(v), 0}, spec_, stride_);
  return {c.x, c.y};
}

BevFeatureMap bev_from_voxels(const SparseVoxelMap& map) {
  const auto dims = map.dims();
  const std::size_t fd = map.feat_dim();
  BevFeatureMap bev(map.spec(), map.stride(), fd * static_cast<std::size_t>(dims[2]));
  for (std::size_t idx = 0; idx < map.size(); ++idx) {
    const VoxelCoord c = map.coord(idx);
    auto cell = bev.cell(static_cast<std::size_t>(c.i), static_cast<std::size_t>(c.j));
    const auto f = map.feature(idx);
    std::copy(f.begin(), f.end(), cell.begin() + static_cast<std::ptrdiff_t>(c.k * fd));
  }
  return bev;
}

std::vector<double> bev_bilinear_sample(const BevFeatureMap& map, double x, double y) {
  const GridSpec& spec = map.spec();
  const Vec3 lo = spec.range_min();
  const Vec3 hi = spec.range_max();
  if (!(x >= lo.x && x < hi.x && y >= lo.y && y < hi.y)) {
    throw OutOfRangeError("bev_bilinear_sample: (x, y) outside the BEV range");
  }
  const double sx = spec.voxel_size().x * map.stride();
  const double sy = spec.voxel_size().y * map.stride();
  const double fx = (x - lo.x) / sx - 0.5;
  const double fy = (y - lo.y) / sy - 0.5;
  const double u0 = std::floor(fx);
  const double v0 = std::floor(fy);
  const double tx = fx - u0;
  const double ty = fy - v0;

  std::vector<double> out(map.channels(), 0.0);
  const auto accumulate = [&](double u, double v, double weight) {
    if (weight == 0.0 || u < 0.0 || v < 0.0) return;
    const auto ui = static_cast<std::size_t>(u);
    const auto vi = static_cast<std::size_t>(v);
    if (ui >= map.cols() || vi >= map.rows()) return;
    const auto cell = map.cell(ui, vi);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += weight * cell[c];
  };
  accumulate(u0, v0, (1.0 - tx) * (1.0 - ty));
  accumulate(u0 + 1.0, v0, tx * (1.0 - ty));
  accumulate(u0, v0 + 1.0, (1.0 - tx) * ty);
  accumulate(u0 + 1.0, v0 + 1.0, tx * ty);
  return out;
}

std::vector<double> aggregate_branch(const FeatureMatrix& rows, const BranchWeights& w) {
  if (rows.rows() == 0) return std::vector<double>(w.pointnet.output_dim(), 0.0);
  const auto att = attention_forward(rows, w.attention);
  return residual_pointnet_forward(att.output, w.pointnet);
}

KeypointFeature assemble_keypoint_feature(Vec3 keypoint,
                                          std::span<const FeatureMatrix, kBranches> branch_rows,
                                          const BevFeatureMap& bev,
                                          std::span<const BranchWeights, kBranches> weights) {
  KeypointFeature kf;
  for (std::size_t b = 0; b < kBranches; ++b) {
    kf.part_offsets[b] = kf.values.size();
    const auto part = aggregate_branch(branch_rows[b], weights[b]);
    kf.values.insert(kf.values.end(), part.begin(), part.end());
  }
  kf.part_offsets[kBranches] = kf.values.size();
  const auto bev_part = bev_bilinear_sample(bev, keypoint.x, keypoint.y);
  kf.values.insert(kf.values.end(), bev_part.begin(), bev_part.end());
  return kf;
}

void RoiGridConfig::validate() const {
  if (grid == 0) throw ArgumentError("RoiGridConfig: grid resolution must be positive");
  if (!(radii[0] > 0.0 && radii[1] > 0.0)) throw ArgumentError("RoiGridConfig: radii must be positive");
  if (output_dim == 0) throw ArgumentError("RoiGridConfig: output_dim must be positive");
}

std::vector<Vec3> roi_grid_points(const Box3D& proposal, std::size_t grid) {
  std::vector<Vec3> pts;
  pts.reserve(grid * grid * grid);
  const auto g = static_cast<double>(grid);
  for (std::size_t a = 0; a < grid; ++a) {
    for (std::size_t b = 0; b < grid; ++b) {
      for (std::size_t c = 0; c < grid; ++c) {
        const Vec3 local{(static_cast<double>(a) + 0.5) / g * proposal.l - 0.5 * proposal.l,
                         (static_cast<double>(b) + 0.5) / g * proposal.w - 0.5 * proposal.w,
                         (static_cast<double>(c) + 0.5) / g * proposal.h - 0.5 * proposal.h};
        pts.push_back(from_box_frame(local, proposal));
      }
    }
  }
  return pts;
}

std::vector<double> roi_grid_feature(const Box3D& proposal, std::span<const Vec3> keypoints,
                                     const FeatureMatrix& features, const RoiGridConfig& cfg,
                                     const RoiGridWeights& w) {
  cfg.validate();
  if (features.rows() != keypoints.size()) throw ShapeError("roi_grid_pool: one feature row per keypoint required");
  for (const auto& m : w.group_mlps) {
    m.validate();
    if (m.input_dim() != features.cols() + 3) {
      throw ShapeError("roi_grid_pool: group perceptron expects " + std::to_string(m.input_dim()) +
                       " inputs, rows have " + std::to_string(features.cols() + 3));
    }
  }
  // Keypoints that can reach any grid point.
  const double reach = 0.5 * std::sqrt(proposal.l * proposal.l + proposal.w * proposal.w +
                                       proposal.h * proposal.h) +
                       std::max(cfg.radii[0], cfg.radii[1]);
  std::vector<std::size_t> near;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (squared_distance(keypoints[i], proposal.center()) <= reach * reach) near.push_back(i);
  }

  const auto grid = roi_grid_points(proposal, cfg.grid);
  const std::size_t w0 = w.group_mlps[0].output_dim();
  const std::size_t w1 = w.group_mlps[1].output_dim();
  std::vector<double> flat(grid.size() * (w0 + w1), 0.0);
  const double c = std::cos(proposal.yaw);
  const double s = std::sin(proposal.yaw);
  std::vector<double> row(features.cols() + 3);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::size_t base = g * (w0 + w1);
    for (std::size_t r = 0; r < 2; ++r) {
      const double r2 = cfg.radii[r] * cfg.radii[r];
      bool any = false;
      for (std::size_t i : near) {
        const Vec3 d = keypoints[i] - grid[g];
        if (d.x * d.x + d.y * d.y + d.z * d.z >= r2) continue;
        const auto f = features.row(i);
        std::copy(f.begin(), f.end(), row.begin());
        row[f.size()] = c * d.x + s * d.y;
        row[f.size() + 1] = -s * d.x + c * d.y;
        row[f.size() + 2] = d.z;
        const auto y = mlp_forward(w.group_mlps[r], row, LastActivation::kRelu);
        for (std::size_t k = 0; k < y.size(); ++k) {
          flat[base + k] = any ? std::max(flat[base + k], y[k]) : y[k];
        }
        any = true;
      }
      base += r == 0 ? w0 : w1;
    }
  }
  return flat;
}

std::vector<double> roi_grid_pool(const Box3D& proposal, std::span<const Vec3> keypoints,
                                  const FeatureMatrix& features, const RoiGridConfig& cfg,
                                  const RoiGridWeights& w) {
  const auto flat = roi_grid_feature(proposal, keypoints, features, cfg, w);
  w.head.validate();
  if (w.head.layers.size() != 2) throw ShapeError("roi_grid_pool: head must have two layers");
  if (w.head.output_dim() != cfg.output_dim) throw ShapeError("roi_grid_pool: head output width mismatch");
  return mlp_forward(w.head, flat, LastActivation::kRelu);
}

}  // namespace voxpoint
