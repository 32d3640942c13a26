// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nerfmark/camera.hpp"
#include "nerfmark/image.hpp"

namespace nerfmark {

// Procedural colored-primitive scene rendered by an analytic ray tracer.
// Gives the pipeline a self-contained ground truth: posed images plus the
// exact cameras that produced them.
struct ScenePrimitive {
  enum class Type { sphere, box } type = Type::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // sphere
  double radius = 1.0;
  Eigen::Vector3d box_min = Eigen::Vector3d::Zero();  // box
  Eigen::Vector3d box_max = Eigen::Vector3d::Zero();
  Eigen::Vector3d color = Eigen::Vector3d::Ones();
};

struct ProceduralScene {
  std::vector<ScenePrimitive> primitives;
  double t_near = 2.0;
  double t_far = 6.0;
  double camera_distance = 4.0;
  double fov_x = 0.9;  // radians

  static ProceduralScene desk_scene();

  // Nearest-hit flat color along the ray; black background on miss.
  Eigen::Vector3d trace(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
};

// Renders a posed view with NxN supersampling per pixel.
ImageRGB render_scene_image(const ProceduralScene& scene, const CameraModel& cam, int supersample);

// Camera rig: evenly spaced azimuths on a ring looking at the origin.
// Test views sit between train azimuths at a slightly different elevation.
std::vector<CameraModel> scene_cameras(const ProceduralScene& scene, int count, int image_size,
                                       bool test_ring);

struct GeneratedScene {
  std::vector<CameraModel> train_cameras;
  std::vector<CameraModel> test_cameras;
};

// Writes transforms_{train,test}.json manifests and PNG images under `dir`.
GeneratedScene generate_scene_dataset(const std::string& dir, int train_views, int test_views,
                                      int image_size, int supersample);

}  // namespace nerfmark
