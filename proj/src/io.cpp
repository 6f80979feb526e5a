#include "voxpoint/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "voxpoint/errors.hpp"

namespace voxpoint {

namespace {

using nlohmann::json;

std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_le32(std::uint32_t v, std::string& out) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFFu));
}

[[noreturn]] void schema_fail(const std::string& pointer, const std::string& what) {
  throw SchemaError("scene JSON " + (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

double number_at(const json& j, const std::string& pointer) {
  if (!j.is_number()) schema_fail(pointer, "expected a number, found " + std::string(j.type_name()));
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_fail(pointer, "number must be finite");
  return v;
}

Vec3 vec3_at(const json& j, const std::string& pointer) {
  if (!j.is_array() || j.size() != 3) schema_fail(pointer, "expected an array of 3 numbers");
  return {number_at(j[0], pointer + "/0"), number_at(j[1], pointer + "/1"), number_at(j[2], pointer + "/2")};
}

std::string string_at(const json& j, const std::string& pointer) {
  if (!j.is_string()) schema_fail(pointer, "expected a string");
  return j.get<std::string>();
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

PointCloud read_kitti_bin(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  constexpr std::size_t kRecord = 16;
  if (bytes.size() % kRecord != 0) {
    const std::uint64_t offset = bytes.size() - bytes.size() % kRecord;
    throw FormatError(path.string() + ": truncated record at byte offset " + std::to_string(offset) +
                          " (file is " + std::to_string(bytes.size()) + " bytes, not a multiple of 16)",
                      offset);
  }
  PointCloud cloud(1);
  cloud.reserve(bytes.size() / kRecord);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
    std::array<double, 4> v{};
    for (std::size_t c = 0; c < 4; ++c) {
      v[c] = static_cast<double>(std::bit_cast<float>(load_le32(data + off + 4 * c)));
    }
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw FormatError(path.string() + ": non-finite coordinate at byte offset " + std::to_string(off), off);
    }
    const double intensity = v[3];
    cloud.push_back({v[0], v[1], v[2]}, std::span<const double>(&intensity, 1));
  }
  return cloud;
}

void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.xyz(i);
    const double intensity = cloud.feat_dim() > 0 ? cloud.feat(i)[0] : 0.0;
    for (double v : {p.x, p.y, p.z, intensity}) {
      store_le32(std::bit_cast<std::uint32_t>(static_cast<float>(v)), out);
    }
  }
  write_text_file(path, out);
}

Scene parse_scene_json(const std::string& text, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw FormatError(std::string("scene JSON syntax error: ") + e.what(), static_cast<std::uint64_t>(line));
  }
  if (!doc.is_object()) schema_fail("", "top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "frame_id" && key != "source" && key != "feature_dim" && key != "points" &&
        key != "boxes" && key != "scores") {
      schema_fail("/" + key, "unknown key");
    }
  }
  if (!doc.contains("points")) schema_fail("/points", "missing required key");
  if (!doc.contains("boxes")) schema_fail("/boxes", "missing required key");

  Scene scene;
  if (doc.contains("frame_id")) scene.frame_id = string_at(doc["frame_id"], "/frame_id");
  if (doc.contains("source")) scene.source = string_at(doc["source"], "/source");

  const json& points = doc["points"];
  if (!points.is_array()) schema_fail("/points", "expected an array");
  std::size_t feat_dim = 0;
  if (doc.contains("feature_dim")) {
    const json& fd = doc["feature_dim"];
    if (!fd.is_number_unsigned()) schema_fail("/feature_dim", "expected a non-negative integer");
    feat_dim = fd.get<std::size_t>();
  } else if (!points.empty() && points[0].is_array() && points[0].size() >= 3) {
    feat_dim = points[0].size() - 3;
  }
  scene.cloud = PointCloud(feat_dim);
  scene.cloud.reserve(points.size());
  std::vector<double> feat(feat_dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string ptr = "/points/" + std::to_string(i);
    const json& p = points[i];
    if (!p.is_array()) schema_fail(ptr, "expected an array [x, y, z, features...]");
    if (p.size() != 3 + feat_dim) {
      schema_fail(ptr, "expected " + std::to_string(3 + feat_dim) + " numbers, found " + std::to_string(p.size()));
    }
    const Vec3 xyz{number_at(p[0], ptr + "/0"), number_at(p[1], ptr + "/1"), number_at(p[2], ptr + "/2")};
    for (std::size_t d = 0; d < feat_dim; ++d) feat[d] = number_at(p[3 + d], ptr + "/" + std::to_string(3 + d));
    scene.cloud.push_back(xyz, feat);
  }

  const json& boxes = doc["boxes"];
  if (!boxes.is_array()) schema_fail("/boxes", "expected an array");
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const std::string ptr = "/boxes/" + std::to_string(b);
    const json& jb = boxes[b];
    if (!jb.is_object()) schema_fail(ptr, "expected an object");
    for (const auto& [key, _] : jb.items()) {
      if (key != "center" && key != "size" && key != "yaw" && key != "class") schema_fail(ptr + "/" + key, "unknown key");
    }
    for (const char* key : {"center", "size", "yaw", "class"}) {
      if (!jb.contains(key)) schema_fail(ptr + "/" + key, "missing required key");
    }
    Box3D box;
    const Vec3 c = vec3_at(jb["center"], ptr + "/center");
    const Vec3 s = vec3_at(jb["size"], ptr + "/size");
    if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) schema_fail(ptr + "/size", "sizes must be positive");
    box.cx = c.x;
    box.cy = c.y;
    box.cz = c.z;
    box.l = s.x;
    box.w = s.y;
    box.h = s.z;
    const double yaw = number_at(jb["yaw"], ptr + "/yaw");
    box.yaw = normalize_yaw(yaw);
    if (!(yaw >= -std::numbers::pi && yaw < std::numbers::pi) && warnings) {
      std::ostringstream msg;
      msg.precision(17);
      msg << ptr << "/yaw: " << yaw << " outside [-pi, pi), normalized to " << box.yaw;
      warnings->push_back(msg.str());
    }
    const std::string cls = string_at(jb["class"], ptr + "/class");
    const auto parsed = parse_class(cls);
    if (!parsed) schema_fail(ptr + "/class", "unknown class '" + cls + "' (expected Car, Pedestrian or Cyclist)");
    box.cls = *parsed;
    scene.gt_boxes.push_back(box);
  }

  if (doc.contains("scores")) {
    const json& js = doc["scores"];
    if (!js.is_array()) schema_fail("/scores", "expected an array");
    if (js.size() != scene.cloud.size()) {
      schema_fail("/scores", "expected " + std::to_string(scene.cloud.size()) + " scores, found " + std::to_string(js.size()));
    }
    std::vector<double> scores(js.size());
    for (std::size_t i = 0; i < js.size(); ++i) {
      const std::string ptr = "/scores/" + std::to_string(i);
      scores[i] = number_at(js[i], ptr);
      if (scores[i] < 0.0 || scores[i] > 1.0) schema_fail(ptr, "score outside [0, 1]");
    }
    scene.scores = std::move(scores);
  }
  return scene;
}

Scene read_scene_json(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  try {
    return parse_scene_json(read_text_file(path), warnings);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::string scene_to_json(const Scene& scene) {
  json doc = json::object();
  doc["frame_id"] = scene.frame_id;
  doc["source"] = scene.source;
  doc["feature_dim"] = scene.cloud.feat_dim();
  json points = json::array();
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const Vec3 p = scene.cloud.xyz(i);
    json row = json::array({p.x, p.y, p.z});
    for (double f : scene.cloud.feat(i)) row.push_back(f);
    points.push_back(std::move(row));
  }
  doc["points"] = std::move(points);
  json boxes = json::array();
  for (const auto& b : scene.gt_boxes) {
    boxes.push_back({{"center", {b.cx, b.cy, b.cz}},
                     {"size", {b.l, b.w, b.h}},
                     {"yaw", b.yaw},
                     {"class", std::string(class_name(b.cls))}});
  }
  doc["boxes"] = std::move(boxes);
  if (scene.scores) doc["scores"] = *scene.scores;
  return doc.dump() + "\n";
}

void write_scene_json(const std::filesystem::path& path, const Scene& scene) {
  write_text_file(path, scene_to_json(scene));
}

KittiCalib read_kitti_calib(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  KittiCalib calib;
  bool have_r0 = false;
  bool have_tr = false;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    const auto read_values = [&](auto& dst) {
      for (auto& v : dst) {
        if (!(ls >> v)) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": too few values for " + key, line_no);
      }
    };
    if (key == "R0_rect:") {
      read_values(calib.r0_rect);
      have_r0 = true;
    } else if (key == "Tr_velo_to_cam:") {
      read_values(calib.tr_velo_to_cam);
      have_tr = true;
    }
  }
  if (!have_r0 || !have_tr) {
    throw FormatError(path.string() + ": calibration needs both R0_rect and Tr_velo_to_cam", line_no);
  }
  return calib;
}

std::vector<Box3D> read_kitti_labels(const std::filesystem::path& label_path, const KittiCalib& calib) {
  using Mat3 = Eigen::Matrix3d;
  const Mat3 r0 = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(calib.r0_rect.data());
  const Eigen::Matrix<double, 3, 4, Eigen::RowMajor> tr =
      Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>>(calib.tr_velo_to_cam.data());
  const Mat3 rot = tr.leftCols<3>();
  const Eigen::Vector3d trans = tr.col(3);
  const Mat3 r0_inv = r0.inverse();
  const Mat3 rot_inv = rot.inverse();

  std::istringstream in(read_text_file(label_path));
  std::vector<Box3D> boxes;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string type;
    if (!(ls >> type)) continue;
    std::array<double, 14> v{};
    for (auto& x : v) {
      if (!(ls >> x)) {
        throw FormatError(label_path.string() + ":" + std::to_string(line_no) + ": expected 15 fields", line_no);
      }
    }
    const auto cls = parse_class(type);
    if (!cls) continue;
    // truncated, occluded, alpha, bbox[4], h, w, l, x, y, z, ry
    const double h = v[7], w = v[8], l = v[9];
    const Eigen::Vector3d cam(v[10], v[11], v[12]);
    const Eigen::Vector3d velo = rot_inv * (r0_inv * cam - trans);
    Box3D b;
    b.cx = velo.x();
    b.cy = velo.y();
    b.cz = velo.z() + 0.5 * h;
    b.l = l;
    b.w = w;
    b.h = h;
    b.yaw = normalize_yaw(-v[13] - 0.5 * std::numbers::pi);
    b.cls = *cls;
    if (!b.valid()) {
      throw FormatError(label_path.string() + ":" + std::to_string(line_no) + ": invalid box dimensions", line_no);
    }
    boxes.push_back(b);
  }
  return boxes;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace voxpoint
