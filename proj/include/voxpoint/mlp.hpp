#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "voxpoint/matrix.hpp"

namespace voxpoint {

/// y = W x + b with W stored row-major (out x in). An empty bias means zero.
struct DenseLayer {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  void validate() const;
  void apply(std::span<const double> x, std::span<double> y) const;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of dense layers with ReLU between them. Whether the last layer is
/// rectified is decided by the caller (score heads feed a sigmoid, shared
/// PointNet perceptrons rectify every layer).
struct MlpWeights {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Throws ShapeError if adjacent layer dimensions do not chain.
  void validate() const;

  friend bool operator==(const MlpWeights&, const MlpWeights&) = default;
};

enum class LastActivation { kLinear, kRelu };

std::vector<double> mlp_forward(const MlpWeights& w, std::span<const double> x, LastActivation last);
/// Row-wise forward over a matrix.
FeatureMatrix mlp_forward_rows(const MlpWeights& w, const FeatureMatrix& x, LastActivation last);

double sigmoid(double x);

/// Deterministic synthetic-weight source. Values are uniform in [-scale, scale]
/// and rounded to float32 so they survive the on-disk format unchanged.
class WeightRng {
 public:
  explicit WeightRng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double scale);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Layer widths `dims` = {in, hidden..., out}; weights scaled by 1/sqrt(fan_in).
MlpWeights random_mlp(std::span<const std::size_t> dims, WeightRng& rng);
DenseLayer random_dense(std::size_t out, std::size_t in, WeightRng& rng, bool with_bias = true);

}  // namespace voxpoint
