#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "oslam/ellipse.hpp"
#include "oslam/errors.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Minimal 9-DOF ellipsoid: center, orientation, semi-axes.
struct EllipsoidParams {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 semi_axes = Vec3::Ones();

  bool is_valid() const {
    return semi_axes.minCoeff() > 0 &&
           (rotation.transpose() * rotation - Mat3::Identity()).norm() < 1e-9;
  }

  /// Shape matrix R diag(a^2) R^T.
  Mat3 shape() const {
    return rotation * semi_axes.array().square().matrix().asDiagonal() *
           rotation.transpose();
  }
};

/// Homogeneous dual quadric, 4x4 symmetric; a proper ellipsoid is kept at
/// the fixed scale Q(3,3) = -1:
///   Q = [[R D^2 R^T - c c^T, -c], [-c^T, -1]].
struct DualQuadric {
  Mat4 Q = Mat4::Zero();

  DualQuadric() = default;
  explicit DualQuadric(const Mat4& Q_) : Q(0.5 * (Q_ + Q_.transpose())) {}

  static DualQuadric from_ellipsoid(const EllipsoidParams& e) {
    Mat4 Q = Mat4::Zero();
    Q.topLeftCorner<3, 3>() = e.shape() - e.center * e.center.transpose();
    Q.topRightCorner<3, 1>() = -e.center;
    Q.bottomLeftCorner<1, 3>() = -e.center.transpose();
    Q(3, 3) = -1.0;
    return DualQuadric(Q);
  }

  Vec3 center() const { return -Q.topRightCorner<3, 1>() / (-Q(3, 3)); }

  /// Decompose back to center/rotation/semi-axes; throws NotAnEllipse if
  /// the recovered shape matrix is not positive definite.
  EllipsoidParams to_ellipsoid() const {
    const Mat4 Qs = Q / (-Q(3, 3));
    EllipsoidParams e;
    e.center = -Qs.topRightCorner<3, 1>();
    const Mat3 shape =
        Qs.topLeftCorner<3, 3>() + e.center * e.center.transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(shape);
    if (es.eigenvalues()[0] <= 0) {
      throw NotAnEllipse("dual quadric is not an ellipsoid");
    }
    Mat3 V = es.eigenvectors();
    if (V.determinant() < 0) V.col(0) = -V.col(0);
    e.rotation = V;
    e.semi_axes = es.eigenvalues().array().sqrt();
    return e;
  }

  bool is_ellipsoid() const {
    if (std::abs(Q(3, 3)) < 1e-12) return false;
    const Mat4 Qs = Q / (-Q(3, 3));
    const Vec3 c = -Qs.topRightCorner<3, 1>();
    const Mat3 shape = Qs.topLeftCorner<3, 3>() + c * c.transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> es(shape);
    return es.eigenvalues()[0] > 0;
  }
};

/// Project a dual quadric through P = [R | t] onto the normalized plane:
/// C* = P Q* P^T. Requires the center strictly in front of the camera
/// (z beyond the largest semi-axis).
inline DualConic project_quadric(const DualQuadric& quadric,
                                 const Pose& pose) {
  const EllipsoidParams e = quadric.to_ellipsoid();
  const double z_cam = pose.apply(e.center).z();
  if (z_cam <= e.semi_axes.maxCoeff()) {
    throw QuadricBehindCamera("quadric center not in front of camera");
  }
  const Mat34 P = pose.matrix34();
  DualConic conic(Mat3(P * quadric.Q * P.transpose()));
  DualConic out = conic.normalized();
  // must be a real ellipse
  const Vec2 mu = -out.C.block<2, 1>(0, 2);
  const Mat2 sigma = out.C.topLeftCorner<2, 2>() + mu * mu.transpose();
  Eigen::SelfAdjointEigenSolver<Mat2> es(sigma);
  if (es.eigenvalues()[0] <= 1e-15 * std::max(1.0, es.eigenvalues()[1])) {
    throw DegenerateProjection("projection is not a real ellipse");
  }
  return out;
}

inline DualConic project_quadric(const EllipsoidParams& e, const Pose& pose) {
  return project_quadric(DualQuadric::from_ellipsoid(e), pose);
}

}  // namespace oslam
