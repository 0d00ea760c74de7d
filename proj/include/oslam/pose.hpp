#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "oslam/errors.hpp"

namespace oslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Rigid transform x_out = R * x_in + t. Used throughout as a
/// world-to-frame map (world-to-camera, world-to-body).
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& R_, const Vec3& t_) : R(R_), t(t_) {}

  Vec3 apply(const Vec3& x) const { return R * x + t; }

  Pose inverse() const { return Pose(R.transpose(), -(R.transpose() * t)); }

  /// this ∘ other (apply `other` first).
  Pose compose(const Pose& other) const {
    return Pose(R * other.R, R * other.t + t);
  }

  Mat34 matrix34() const {
    Mat34 P;
    P.leftCols<3>() = R;
    P.col(3) = t;
    return P;
  }

  Mat4 matrix() const {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = R;
    T.topRightCorner<3, 1>() = t;
    return T;
  }

  /// Position of the frame origin expressed in the input space
  /// (camera/body center in world coordinates).
  Vec3 center() const { return -(R.transpose() * t); }

  bool is_valid(double tol = 1e-9) const {
    return (R.transpose() * R - Mat3::Identity()).norm() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
  }
};

inline Mat3 skew(const Vec3& w) {
  Mat3 S;
  S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return S;
}

inline Mat3 so3_exp(const Vec3& w) {
  const double th = w.norm();
  const Mat3 W = skew(w);
  if (th < 1e-10) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  return Mat3::Identity() + std::sin(th) / th * W +
         (1.0 - std::cos(th)) / (th * th) * W * W;
}

inline Vec3 so3_log(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double th = std::acos(c);
  if (th < 1e-10) {
    // first-order: vee(R - R^T)/2
    return 0.5 * Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  }
  if (th > M_PI - 1e-6) {
    // near pi: axis from the dominant column of R + I
    Mat3 A = R + Mat3::Identity();
    int col = 0;
    A.colwise().norm().maxCoeff(&col);
    Vec3 axis = A.col(col).normalized();
    // fix sign using the off-diagonal skew part
    Vec3 v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (v.dot(axis) < 0) axis = -axis;
    return th * axis;
  }
  const double s = th / (2.0 * std::sin(th));
  return s * Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
}

/// SE(3) exponential; xi = [rho; omega] (translation part first).
inline Pose se3_exp(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  const double th = w.norm();
  const Mat3 W = skew(w);
  Mat3 V;
  if (th < 1e-10) {
    V = Mat3::Identity() + 0.5 * W + W * W / 6.0;
  } else {
    V = Mat3::Identity() + (1.0 - std::cos(th)) / (th * th) * W +
        (th - std::sin(th)) / (th * th * th) * W * W;
  }
  return Pose(so3_exp(w), V * rho);
}

inline Vec6 se3_log(const Pose& T) {
  const Vec3 w = so3_log(T.R);
  const double th = w.norm();
  const Mat3 W = skew(w);
  Mat3 Vinv;
  if (th < 1e-10) {
    Vinv = Mat3::Identity() - 0.5 * W + W * W / 12.0;
  } else {
    const double half = 0.5 * th;
    const double cot = half / std::tan(half);
    Vinv = Mat3::Identity() - 0.5 * W + (1.0 - cot) / (th * th) * W * W;
  }
  Vec6 xi;
  xi.head<3>() = Vinv * T.t;
  xi.tail<3>() = w;
  return xi;
}

/// Least-squares rigid alignment q ≈ R p + t (Kabsch / Umeyama without
/// scale). Throws DegenerateInput for < 3 points or a rank-deficient
/// configuration that leaves the rotation unconstrained is tolerated
/// (SVD still returns a valid rotation).
inline Pose align_point_sets(const std::vector<Vec3>& p,
                             const std::vector<Vec3>& q) {
  if (p.size() != q.size()) throw LengthMismatch("point set size mismatch");
  if (p.size() < 3) throw DegenerateInput("need >= 3 point pairs");
  Vec3 pm = Vec3::Zero(), qm = Vec3::Zero();
  for (size_t i = 0; i < p.size(); ++i) {
    pm += p[i];
    qm += q[i];
  }
  pm /= static_cast<double>(p.size());
  qm /= static_cast<double>(q.size());
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < p.size(); ++i) {
    H += (p[i] - pm) * (q[i] - qm).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0
                ? -1.0
                : 1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return Pose(R, qm - R * pm);
}

}  // namespace oslam
