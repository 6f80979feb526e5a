#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxpoint/geom.hpp"

namespace voxpoint {

/// A point cloud with its ground-truth boxes, as loaded from disk or generated.
struct Scene {
  PointCloud cloud;
  std::vector<Box3D> gt_boxes;
  std::optional<std::vector<double>> scores;
  std::string frame_id;
  std::string source;

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Velodyne scan: consecutive little-endian float32 (x, y, z, intensity)
/// records. Throws FormatError (offset = byte offset of the partial record)
/// if the file length is not a multiple of 16.
PointCloud read_kitti_bin(const std::filesystem::path& path);
/// Writes xyz and the first feature channel (0 when the cloud has none) as float32.
void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

/// Scene JSON:
///
///   {
///     "frame_id": "000042",            (optional string)
///     "source": "synthetic",           (optional string)
///     "feature_dim": 1,                (optional; inferred from the first point)
///     "points": [[x, y, z, f0, ...], ...],
///     "boxes": [{"center": [x, y, z], "size": [l, w, h], "yaw": r, "class": "Car"}],
///     "scores": [s0, s1, ...]          (optional, one per point, in [0, 1])
///   }
///
/// Unknown keys are rejected. Errors name the offending JSON pointer; syntax
/// errors carry the parser's line and column. A yaw outside [-pi, pi) is
/// normalized and reported through `warnings`.
Scene parse_scene_json(const std::string& text, std::vector<std::string>* warnings = nullptr);
Scene read_scene_json(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);
std::string scene_to_json(const Scene& scene);
void write_scene_json(const std::filesystem::path& path, const Scene& scene);

/// KITTI calibration (rectification + velodyne-to-camera) used to move camera
/// frame labels into the LiDAR frame.
struct KittiCalib {
  std::array<double, 9> r0_rect{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 12> tr_velo_to_cam{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
};
KittiCalib read_kitti_calib(const std::filesystem::path& path);

/// Parses a KITTI label file and converts Car/Pedestrian/Cyclist boxes into
/// LiDAR-frame Box3D (other types are skipped). FormatError offsets are line numbers.
std::vector<Box3D> read_kitti_labels(const std::filesystem::path& label_path, const KittiCalib& calib);

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// RFC 4180 field quoting.
std::string csv_escape(const std::string& field);

}  // namespace voxpoint
