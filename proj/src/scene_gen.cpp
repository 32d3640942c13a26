// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/scene_gen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace nerfmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Smallest positive hit distance, or nullopt.
std::optional<double> hit_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                 const Eigen::Vector3d& c, double r) {
  const Eigen::Vector3d oc = o - c;
  const double b = oc.dot(d);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t0 = -b - sq, t1 = -b + sq;
  if (t0 > 1e-9) return t0;
  if (t1 > 1e-9) return t1;
  return std::nullopt;
}

std::optional<double> hit_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                              const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-14) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (lo[a] - o[a]) / d[a];
    double t1 = (hi[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  if (tmin > 1e-9) return tmin;
  if (tmax > 1e-9) return tmax;
  return std::nullopt;
}

json camera_to_frame(const CameraModel& cam, const std::string& file) {
  json frame;
  frame["file_path"] = file;
  const Eigen::Matrix4d m = cam.camera_to_world();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  frame["transform_matrix"] = rows;
  return frame;
}

void write_manifest(const fs::path& path, const ProceduralScene& scene,
                    const std::vector<CameraModel>& cams, const std::string& subdir,
                    int image_size) {
  json manifest;
  manifest["camera_angle_x"] = scene.fov_x;
  manifest["near"] = scene.t_near;
  manifest["far"] = scene.t_far;
  manifest["width"] = image_size;
  manifest["height"] = image_size;
  json frames = json::array();
  for (size_t i = 0; i < cams.size(); ++i)
    frames.push_back(camera_to_frame(cams[i], subdir + "/r_" + std::to_string(i)));
  manifest["frames"] = frames;
  std::ofstream out(path);
  out << manifest.dump(1) << "\n";
  if (!out) throw std::runtime_error("scene: cannot write " + path.string());
}

}  // namespace

ProceduralScene ProceduralScene::desk_scene() {
  ProceduralScene s;
  ScenePrimitive a;
  a.type = ScenePrimitive::Type::sphere;
  a.center = {0.0, 0.45, 0.25};
  a.radius = 0.72;
  a.color = {0.85, 0.22, 0.2};
  ScenePrimitive b;
  b.type = ScenePrimitive::Type::sphere;
  b.center = {-0.6, -0.55, -0.2};
  b.radius = 0.5;
  b.color = {0.2, 0.72, 0.3};
  ScenePrimitive c;
  c.type = ScenePrimitive::Type::box;
  c.box_min = {0.1, -1.05, -0.8};
  c.box_max = {1.05, -0.1, 0.2};
  c.color = {0.25, 0.4, 0.9};
  ScenePrimitive d;
  d.type = ScenePrimitive::Type::sphere;
  d.center = {0.65, 0.15, -0.62};
  d.radius = 0.34;
  d.color = {0.95, 0.8, 0.25};
  s.primitives = {a, b, c, d};
  return s;
}

Eigen::Vector3d ProceduralScene::trace(const Eigen::Vector3d& origin,
                                       const Eigen::Vector3d& dir) const {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d color = Eigen::Vector3d::Zero();  // black background
  for (const auto& p : primitives) {
    std::optional<double> t;
    if (p.type == ScenePrimitive::Type::sphere)
      t = hit_sphere(origin, dir, p.center, p.radius);
    else
      t = hit_box(origin, dir, p.box_min, p.box_max);
    if (t && *t < best) {
      best = *t;
      color = p.color;
    }
  }
  return color;
}

ImageRGB render_scene_image(const ProceduralScene& scene, const CameraModel& cam,
                            int supersample) {
  if (supersample < 1) throw std::invalid_argument("scene: supersample must be >= 1");
  ImageRGB img(cam.width, cam.height);
  const double inv = 1.0 / supersample;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          Eigen::Vector3d o, d;
          // Sub-pixel offsets around the pixel center.
          cam.pixel_ray(x + (sx + 0.5) * inv - 0.5, y + (sy + 0.5) * inv - 0.5, o, d);
          acc += scene.trace(o, d);
        }
      }
      acc *= inv * inv;
      float* px = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(acc[c]);
    }
  }
  return img;
}

std::vector<CameraModel> scene_cameras(const ProceduralScene& scene, int count, int image_size,
                                       bool test_ring) {
  if (count < 1) throw std::invalid_argument("scene: need at least one view");
  const double focal = 0.5 * image_size / std::tan(0.5 * scene.fov_x);
  const double elevation = test_ring ? 0.64 : 0.5;  // radians above the xy plane
  std::vector<CameraModel> cams;
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * M_PI * i / count + (test_ring ? M_PI / count : 0.0);
    const Eigen::Vector3d eye(scene.camera_distance * std::cos(elevation) * std::cos(az),
                              scene.camera_distance * std::cos(elevation) * std::sin(az),
                              scene.camera_distance * std::sin(elevation));
    cams.push_back(CameraModel::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 0, 1),
                                        focal, image_size, image_size));
  }
  return cams;
}

GeneratedScene generate_scene_dataset(const std::string& dir, int train_views, int test_views,
                                      int image_size, int supersample) {
  const ProceduralScene scene = ProceduralScene::desk_scene();
  GeneratedScene out;
  out.train_cameras = scene_cameras(scene, train_views, image_size, false);
  out.test_cameras = scene_cameras(scene, test_views, image_size, true);
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  for (size_t i = 0; i < out.train_cameras.size(); ++i)
    write_png((fs::path(dir) / "train" / ("r_" + std::to_string(i) + ".png")).string(),
              render_scene_image(scene, out.train_cameras[i], supersample));
  for (size_t i = 0; i < out.test_cameras.size(); ++i)
    write_png((fs::path(dir) / "test" / ("r_" + std::to_string(i) + ".png")).string(),
              render_scene_image(scene, out.test_cameras[i], supersample));
  write_manifest(fs::path(dir) / "transforms_train.json", scene, out.train_cameras, "train",
                 image_size);
  write_manifest(fs::path(dir) / "transforms_test.json", scene, out.test_cameras, "test",
                 image_size);
  return out;
}

}  // namespace nerfmark
