#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "voxpoint/aggregate.hpp"
#include "voxpoint/mlp.hpp"

namespace voxpoint {

/// Named weight sections. The on-disk layout (all integers uint32, all values
/// float32, little-endian):
///
///   "VXPW"  version=1  section_count
///   section := tag[4]  name_len  name[name_len]  payload
///
///   tag "MLP_": layer_count, then per layer (out, in, has_bias),
///               then per layer weight[out*in] row-major and bias[out] if has_bias
///   tag "ATTN": d_f, d_k, d_v, then W_q[d_k*d_f], W_k[d_k*d_f], W_v[d_v*d_f]
///   tag "RPNT": block_count, then per block (out, in), then per block
///               eps, weight[out*in], bias[out], scale[out], shift[out],
///               mean[out], var[out]
///
/// Values are stored as float32; writing a double that is not exactly
/// representable rounds it.
struct WeightBundle {
  std::map<std::string, MlpWeights> mlps;
  std::map<std::string, AttentionWeights> attention;
  std::map<std::string, ResidualPointNetWeights> pointnets;

  const MlpWeights& mlp(const std::string& name) const;
  const AttentionWeights& attn(const std::string& name) const;
  const ResidualPointNetWeights& pointnet(const std::string& name) const;

  friend bool operator==(const WeightBundle&, const WeightBundle&) = default;
};

std::string encode_weights(const WeightBundle& bundle);
/// Throws FormatError (offset = byte offset) on malformed input.
WeightBundle decode_weights(const std::string& bytes);

void write_weights(const std::filesystem::path& path, const WeightBundle& bundle);
WeightBundle read_weights(const std::filesystem::path& path);

}  // namespace voxpoint
