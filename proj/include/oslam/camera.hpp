#pragma once

#include <cmath>
#include <vector>

#include "oslam/errors.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Unified (Mei-style) omnidirectional model with a single mirror
/// parameter xi. xi = 0 reduces to a pinhole.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double xi = 0.0;

  bool is_valid() const { return fx > 0 && fy > 0 && xi >= 0; }
};

/// Forward model: unit-sphere projection, mirror shift by xi,
/// perspective divide, then (fx, fy, cx, cy).
inline Vec2 project_point(const CameraIntrinsics& intr, const Vec3& p_cam) {
  const double rho = p_cam.norm();
  if (rho <= 0.0) throw BehindCamera("zero-length ray");
  const double denom = p_cam.z() + intr.xi * rho;
  if (denom <= 0.0) throw BehindCamera("point behind unified-model horizon");
  return Vec2(intr.fx * p_cam.x() / denom + intr.cx,
              intr.fy * p_cam.y() / denom + intr.cy);
}

/// Closed-form inversion of the unified model onto the z = 1 plane.
/// Returned vector has third component exactly 1.
inline Vec3 unproject_pixel(const CameraIntrinsics& intr, const Vec2& u) {
  const double mx = (u.x() - intr.cx) / intr.fx;
  const double my = (u.y() - intr.cy) / intr.fy;
  const double r2 = mx * mx + my * my;
  const double xi = intr.xi;
  // point on the unit sphere: (eta*mx, eta*my, eta - xi)
  const double disc = 1.0 + (1.0 - xi * xi) * r2;
  if (disc < 0.0 || xi * xi * r2 >= 1.0) {
    throw NonInvertiblePixel("pixel outside invertible image circle");
  }
  const double eta = (xi + std::sqrt(disc)) / (1.0 + r2);
  const double zs = eta - xi;
  if (zs <= 0.0) throw NonInvertiblePixel("back-projected ray has z <= 0");
  return Vec3(eta * mx / zs, eta * my / zs, 1.0);
}

/// Ordered camera set; extrinsic maps body coordinates to camera
/// coordinates (world-to-camera = extrinsic ∘ world-to-body).
struct CameraRig {
  struct Camera {
    CameraIntrinsics intrinsics;
    Pose extrinsic;  // body-to-camera
  };
  std::vector<Camera> cameras;

  int size() const { return static_cast<int>(cameras.size()); }

  Pose camera_pose(int camera_id, const Pose& world_to_body) const {
    return cameras.at(camera_id).extrinsic.compose(world_to_body);
  }
};

}  // namespace oslam
