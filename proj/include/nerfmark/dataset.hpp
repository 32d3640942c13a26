// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nerfmark/camera.hpp"
#include "nerfmark/image.hpp"

namespace nerfmark {

struct PosedImage {
  ImageRGB rgb;
  CameraModel camera;
};

// Posed multi-view dataset with shared near/far bounds. Immutable after
// load; safe to share across threads.
struct Dataset {
  std::vector<PosedImage> train;
  std::vector<PosedImage> test;
  double t_near = 0;
  double t_far = 0;

  void validate() const;
  const std::vector<PosedImage>& split(const std::string& name) const;
};

// Loads a dataset directory containing transforms_train.json and
// transforms_test.json manifests plus the referenced PNG images. Each
// manifest lists 4x4 camera-to-world matrices, a shared horizontal field of
// view, and the scene's near/far bounds (required fields here).
Dataset load_dataset(const std::string& dir);

}  // namespace nerfmark
