#include "voxpoint/weights_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "voxpoint/errors.hpp"
#include "voxpoint/io.hpp"

namespace voxpoint {

namespace {

constexpr char kMagic[4] = {'V', 'X', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 24;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out_.push_back(static_cast<char>((v >> s) & 0xFFu));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void floats(const std::vector<double>& v) {
    for (double x : v) f32(x);
  }
  void tag(const char (&t)[5]) { out_.append(t, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("weight file truncated while reading ") + what + " at byte offset " +
                            std::to_string(pos_),
                        pos_);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::uint32_t dim(const char* what) {
    const std::size_t at = pos_;
    const std::uint32_t v = u32(what);
    if (v == 0 || v > kMaxDim) {
      throw FormatError(std::string("weight file: implausible ") + what + " " + std::to_string(v) +
                            " at byte offset " + std::to_string(at),
                        at);
    }
    return v;
  }
  double f32(const char* what) {
    const std::size_t at = pos_;
    const double v = static_cast<double>(std::bit_cast<float>(u32(what)));
    if (!std::isfinite(v)) {
      throw FormatError("weight file: non-finite value at byte offset " + std::to_string(at), at);
    }
    return v;
  }
  std::vector<double> floats(std::size_t n, const char* what) {
    need(4 * n, what);
    std::vector<double> v(n);
    for (double& x : v) x = f32(what);
    return v;
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const MlpWeights& WeightBundle::mlp(const std::string& name) const {
  const auto it = mlps.find(name);
  if (it == mlps.end()) throw std::out_of_range("weight bundle has no MLP section '" + name + "'");
  return it->second;
}

const AttentionWeights& WeightBundle::attn(const std::string& name) const {
  const auto it = attention.find(name);
  if (it == attention.end()) throw std::out_of_range("weight bundle has no attention section '" + name + "'");
  return it->second;
}

const ResidualPointNetWeights& WeightBundle::pointnet(const std::string& name) const {
  const auto it = pointnets.find(name);
  if (it == pointnets.end()) throw std::out_of_range("weight bundle has no PointNet section '" + name + "'");
  return it->second;
}

std::string encode_weights(const WeightBundle& bundle) {
  Writer w;
  w.tag("VXPW");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(bundle.mlps.size() + bundle.attention.size() + bundle.pointnets.size()));
  for (const auto& [name, mlp] : bundle.mlps) {
    mlp.validate();
    w.tag("MLP_");
    w.str(name);
    w.u32(static_cast<std::uint32_t>(mlp.layers.size()));
    for (const auto& l : mlp.layers) {
      w.u32(static_cast<std::uint32_t>(l.out));
      w.u32(static_cast<std::uint32_t>(l.in));
      w.u32(l.bias.empty() ? 0u : 1u);
    }
    for (const auto& l : mlp.layers) {
      w.floats(l.weight);
      w.floats(l.bias);
    }
  }
  for (const auto& [name, a] : bundle.attention) {
    a.validate();
    w.tag("ATTN");
    w.str(name);
    w.u32(static_cast<std::uint32_t>(a.d_f));
    w.u32(static_cast<std::uint32_t>(a.d_k));
    w.u32(static_cast<std::uint32_t>(a.d_v));
    w.floats(a.w_q);
    w.floats(a.w_k);
    w.floats(a.w_v);
  }
  for (const auto& [name, p] : bundle.pointnets) {
    p.validate();
    w.tag("RPNT");
    w.str(name);
    w.u32(static_cast<std::uint32_t>(p.blocks.size()));
    for (const auto& b : p.blocks) {
      w.u32(static_cast<std::uint32_t>(b.linear.out));
      w.u32(static_cast<std::uint32_t>(b.linear.in));
    }
    for (const auto& b : p.blocks) {
      w.f32(b.eps);
      w.floats(b.linear.weight);
      // Bias is always written for residual blocks.
      w.floats(b.linear.bias.empty() ? std::vector<double>(b.linear.out, 0.0) : b.linear.bias);
      w.floats(b.scale);
      w.floats(b.shift);
      w.floats(b.mean);
      w.floats(b.var);
    }
  }
  return w.take();
}

WeightBundle decode_weights(const std::string& bytes) {
  Reader r(bytes);
  const std::string magic = r.raw(4, "magic");
  if (magic != std::string(kMagic, 4)) throw FormatError("weight file: bad magic (expected VXPW)", 0);
  const std::size_t version_at = r.pos();
  if (const auto v = r.u32("version"); v != kVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(v), version_at);
  }
  const std::uint32_t sections = r.u32("section count");
  WeightBundle bundle;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::size_t section_at = r.pos();
    const std::string tag = r.raw(4, "section tag");
    const std::uint32_t name_len = r.u32("section name length");
    const std::string name = r.raw(name_len, "section name");
    const auto duplicate = [&] {
      return bundle.mlps.count(name) + bundle.attention.count(name) + bundle.pointnets.count(name) > 0;
    };
    if (duplicate()) throw FormatError("weight file: duplicate section '" + name + "'", section_at);
    if (tag == "MLP_") {
      const std::uint32_t layers = r.dim("layer count");
      MlpWeights mlp;
      std::vector<bool> has_bias;
      for (std::uint32_t l = 0; l < layers; ++l) {
        DenseLayer layer;
        layer.out = r.dim("layer output width");
        layer.in = r.dim("layer input width");
        has_bias.push_back(r.u32("bias flag") != 0);
        mlp.layers.push_back(std::move(layer));
      }
      for (std::uint32_t l = 0; l < layers; ++l) {
        auto& layer = mlp.layers[l];
        layer.weight = r.floats(layer.out * layer.in, "layer weights");
        if (has_bias[l]) layer.bias = r.floats(layer.out, "layer bias");
      }
      try {
        mlp.validate();
      } catch (const ShapeError& e) {
        throw FormatError("weight file section '" + name + "': " + e.what(), section_at);
      }
      bundle.mlps.emplace(name, std::move(mlp));
    } else if (tag == "ATTN") {
      AttentionWeights a;
      a.d_f = r.dim("d_f");
      a.d_k = r.dim("d_k");
      a.d_v = r.dim("d_v");
      a.w_q = r.floats(a.d_k * a.d_f, "W_q");
      a.w_k = r.floats(a.d_k * a.d_f, "W_k");
      a.w_v = r.floats(a.d_v * a.d_f, "W_v");
      bundle.attention.emplace(name, std::move(a));
    } else if (tag == "RPNT") {
      const std::uint32_t blocks = r.dim("block count");
      ResidualPointNetWeights p;
      p.blocks.resize(blocks);
      for (auto& b : p.blocks) {
        b.linear.out = r.dim("block output width");
        b.linear.in = r.dim("block input width");
      }
      for (auto& b : p.blocks) {
        const std::size_t c = b.linear.out;
        b.eps = r.f32("eps");
        b.linear.weight = r.floats(c * b.linear.in, "block weights");
        b.linear.bias = r.floats(c, "block bias");
        b.scale = r.floats(c, "scale");
        b.shift = r.floats(c, "shift");
        b.mean = r.floats(c, "mean");
        b.var = r.floats(c, "var");
      }
      try {
        p.validate();
      } catch (const ShapeError& e) {
        throw FormatError("weight file section '" + name + "': " + e.what(), section_at);
      }
      bundle.pointnets.emplace(name, std::move(p));
    } else {
      throw FormatError("weight file: unknown section tag '" + tag + "' at byte offset " +
                            std::to_string(section_at),
                        section_at);
    }
  }
  if (!r.done()) {
    throw FormatError("weight file: trailing bytes at offset " + std::to_string(r.pos()), r.pos());
  }
  return bundle;
}

void write_weights(const std::filesystem::path& path, const WeightBundle& bundle) {
  write_text_file(path, encode_weights(bundle));
}

WeightBundle read_weights(const std::filesystem::path& path) { return decode_weights(read_text_file(path)); }

}  // namespace voxpoint
