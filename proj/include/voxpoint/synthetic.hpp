#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "voxpoint/io.hpp"

namespace voxpoint {

/// Ground plane plus clutter, with box-shaped object clusters holding
/// roughly `fg_fraction` of the points. Coordinates and intensities are
/// rounded to float32 so scenes survive the KITTI binary format unchanged.
struct SceneGenConfig {
  std::size_t num_points = 16384;
  double fg_fraction = 0.05;
  std::size_t num_objects = 4;
  double x_min = 0.0;
  double x_extent = 70.4;
  double y_min = -40.0;
  double y_extent = 80.0;
  double ground_z = -1.73;
  double clutter_fraction = 0.2;  // share of background points lifted off the ground

  void validate() const;
};

Scene generate_scene(const SceneGenConfig& cfg, std::uint64_t seed);

/// Same point density as `base`, with the area (and point count) multiplied by `factor`.
SceneGenConfig scaled_density(const SceneGenConfig& base, double factor);

}  // namespace voxpoint
