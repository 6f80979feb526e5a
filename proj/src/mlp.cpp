#include "voxpoint/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxpoint/errors.hpp"

namespace voxpoint {

void DenseLayer::validate() const {
  if (out == 0 || in == 0) throw ShapeError("DenseLayer: zero dimension");
  if (weight.size() != out * in) {
    throw ShapeError("DenseLayer: weight has " + std::to_string(weight.size()) +
                     " entries, expected " + std::to_string(out * in));
  }
  if (!bias.empty() && bias.size() != out) throw ShapeError("DenseLayer: bias length mismatch");
}

void DenseLayer::apply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != in || y.size() != out) {
    throw ShapeError("DenseLayer: expected input " + std::to_string(in) + ", got " +
                     std::to_string(x.size()));
  }
  for (std::size_t r = 0; r < out; ++r) {
    const double* w = weight.data() + r * in;
    double acc = bias.empty() ? 0.0 : bias[r];
    for (std::size_t c = 0; c < in; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
}

std::size_t MlpWeights::input_dim() const { return layers.empty() ? 0 : layers.front().in; }
std::size_t MlpWeights::output_dim() const { return layers.empty() ? 0 : layers.back().out; }

void MlpWeights::validate() const {
  if (layers.empty()) throw ShapeError("MlpWeights: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l > 0 && layers[l].in != layers[l - 1].out) {
      throw ShapeError("MlpWeights: layer " + std::to_string(l) + " input " +
                       std::to_string(layers[l].in) + " does not match previous output " +
                       std::to_string(layers[l - 1].out));
    }
  }
}

std::vector<double> mlp_forward(const MlpWeights& w, std::span<const double> x, LastActivation last) {
  if (w.layers.empty()) throw ShapeError("mlp_forward: no layers");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const DenseLayer& layer = w.layers[l];
    next.assign(layer.out, 0.0);
    layer.apply(cur, next);
    const bool rectify = l + 1 < w.layers.size() || last == LastActivation::kRelu;
    if (rectify) {
      for (double& v : next) v = std::max(v, 0.0);
    }
    cur.swap(next);
  }
  return cur;
}

FeatureMatrix mlp_forward_rows(const MlpWeights& w, const FeatureMatrix& x, LastActivation last) {
  FeatureMatrix out(x.rows(), w.output_dim());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto y = mlp_forward(w, x.row(r), last);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double WeightRng::uniform(double scale) {
  // 53 random bits -> [0, 1), then float32 rounding.
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return static_cast<double>(static_cast<float>((2.0 * u - 1.0) * scale));
}

DenseLayer random_dense(std::size_t out, std::size_t in, WeightRng& rng, bool with_bias) {
  DenseLayer layer{out, in, std::vector<double>(out * in), {}};
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : layer.weight) v = rng.uniform(scale);
  if (with_bias) {
    layer.bias.resize(out);
    for (double& v : layer.bias) v = rng.uniform(0.1);
  }
  return layer;
}

MlpWeights random_mlp(std::span<const std::size_t> dims, WeightRng& rng) {
  if (dims.size() < 2) throw ShapeError("random_mlp: need at least input and output widths");
  MlpWeights w;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    w.layers.push_back(random_dense(dims[l + 1], dims[l], rng));
  }
  return w;
}

}  // namespace voxpoint
