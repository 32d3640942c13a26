// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nerfmark {

// Pinhole camera with a camera-to-world rigid transform. Camera space is
// OpenGL-style: x right, y up, the camera looks down -z. World units are
// whatever the dataset uses.
struct CameraModel {
  double focal = 0;            // pixels
  double cx = 0, cy = 0;       // principal point, pixels
  int width = 0, height = 0;   // pixels
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera-to-world
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static constexpr double kRotationTol = 1e-5;

  void validate(const std::string& context = "") const {
    const std::string where = context.empty() ? "" : " (" + context + ")";
    if (!(focal > 0)) throw std::invalid_argument("camera: focal must be > 0" + where);
    if (width < 1 || height < 1) throw std::invalid_argument("camera: bad image size" + where);
    const Eigen::Matrix3d rtr = rotation.transpose() * rotation;
    if ((rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kRotationTol)
      throw std::invalid_argument("camera: rotation not orthonormal" + where);
    if (std::abs(rotation.determinant() - 1.0) > kRotationTol)
      throw std::invalid_argument("camera: rotation determinant != +1" + where);
  }

  // Ray through the center of pixel (px, py); direction is unit length in
  // world space.
  void pixel_ray(double px, double py, Eigen::Vector3d& origin, Eigen::Vector3d& dir) const {
    const Eigen::Vector3d d_cam((px + 0.5 - cx) / focal, -(py + 0.5 - cy) / focal, -1.0);
    dir = (rotation * d_cam).normalized();
    origin = translation;
  }

  Eigen::Vector3d forward_axis() const { return rotation * Eigen::Vector3d(0, 0, -1); }

  Eigen::Matrix4d camera_to_world() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  static CameraModel from_matrix(const Eigen::Matrix4d& c2w, double focal, int width, int height) {
    CameraModel cam;
    cam.rotation = c2w.topLeftCorner<3, 3>();
    cam.translation = c2w.topRightCorner<3, 1>();
    cam.focal = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    return cam;
  }

  // Look-at constructor used by the scene generator: -z axis points from
  // eye to target, +y stays as close to `up` as possible.
  static CameraModel look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                             const Eigen::Vector3d& up, double focal, int width, int height) {
    const Eigen::Vector3d fwd = (target - eye).normalized();
    const Eigen::Vector3d right = fwd.cross(up).normalized();
    const Eigen::Vector3d cam_up = right.cross(fwd);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 1>(0, 0) = right;
    m.block<3, 1>(0, 1) = cam_up;
    m.block<3, 1>(0, 2) = -fwd;
    m.block<3, 1>(0, 3) = eye;
    return from_matrix(m, focal, width, height);
  }
};

}  // namespace nerfmark
