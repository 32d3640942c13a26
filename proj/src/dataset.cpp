// SPDX-License-Identifier: Apache-2.0
#include "nerfmark/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace nerfmark {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<PosedImage> load_split(const fs::path& dir, const std::string& split, double& near,
                                   double& far) {
  const fs::path manifest_path = dir / ("transforms_" + split + ".json");
  std::ifstream in(manifest_path);
  if (!in)
    throw std::runtime_error("dataset: missing manifest " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset: cannot parse " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("camera_angle_x"))
    throw std::runtime_error("dataset: manifest lacks camera_angle_x: " + manifest_path.string());
  if (!manifest.contains("near") || !manifest.contains("far"))
    throw std::runtime_error("dataset: manifest must state near/far bounds: " +
                             manifest_path.string());
  near = manifest["near"].get<double>();
  far = manifest["far"].get<double>();
  const double angle_x = manifest["camera_angle_x"].get<double>();
  if (!(angle_x > 0)) throw std::runtime_error("dataset: camera_angle_x must be > 0");

  std::vector<PosedImage> images;
  for (const auto& frame : manifest.at("frames")) {
    std::string file = frame.at("file_path").get<std::string>();
    fs::path img_path = dir / file;
    if (!img_path.has_extension()) img_path += ".png";
    PosedImage pi;
    pi.rgb = read_png(img_path.string());

    const auto& tm = frame.at("transform_matrix");
    if (tm.size() != 4) throw std::runtime_error("dataset: transform_matrix must be 4x4 in " + file);
    Eigen::Matrix4d c2w;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) c2w(r, c) = tm.at(r).at(c).get<double>();

    const int w = pi.rgb.width, h = pi.rgb.height;
    if (manifest.contains("width") && manifest["width"].get<int>() != w)
      throw std::runtime_error("dataset: image width differs from manifest for frame " + file);
    if (manifest.contains("height") && manifest["height"].get<int>() != h)
      throw std::runtime_error("dataset: image height differs from manifest for frame " + file);

    const double focal = 0.5 * w / std::tan(0.5 * angle_x);
    pi.camera = CameraModel::from_matrix(c2w, focal, w, h);
    try {
      pi.camera.validate("frame " + file);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("dataset: ") + e.what());
    }
    images.push_back(std::move(pi));
  }
  return images;
}

}  // namespace

void Dataset::validate() const {
  if (train.empty() || test.empty())
    throw std::runtime_error("dataset: needs at least 1 train and 1 test image");
  if (!(0 < t_near && t_near < t_far))
    throw std::runtime_error("dataset: requires 0 < near < far");
  for (const auto& split : {&train, &test})
    for (const auto& pi : *split) {
      pi.camera.validate();
      if (pi.rgb.width != pi.camera.width || pi.rgb.height != pi.camera.height)
        throw std::runtime_error("dataset: image/camera dimension mismatch");
      for (float v : pi.rgb.data)
        if (v < 0.f || v > 1.f) throw std::runtime_error("dataset: pixel outside [0,1]");
    }
}

const std::vector<PosedImage>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw std::invalid_argument("dataset: unknown split " + name);
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  double near_train = 0, far_train = 0, near_test = 0, far_test = 0;
  d.train = load_split(dir, "train", near_train, far_train);
  d.test = load_split(dir, "test", near_test, far_test);
  if (near_train != near_test || far_train != far_test)
    throw std::runtime_error("dataset: train/test manifests disagree on near/far");
  d.t_near = near_train;
  d.t_far = far_train;
  d.validate();
  return d;
}

}  // namespace nerfmark
