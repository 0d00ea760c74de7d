#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "oslam/errors.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Ellipse on the normalized plane as a 2D Gaussian: center mu and SPD
/// shape matrix sigma = R(theta) diag(alpha^2, beta^2) R(theta)^T, where
/// alpha >= beta are the semi-axes and theta the orientation of the
/// alpha axis.
struct GaussianEllipse {
  Vec2 mu = Vec2::Zero();
  Mat2 sigma = Mat2::Identity();

  GaussianEllipse() = default;
  GaussianEllipse(const Vec2& mu_, const Mat2& sigma_)
      : mu(mu_), sigma(sigma_) {}

  static GaussianEllipse from_axes(const Vec2& mu, double alpha, double beta,
                                   double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    Mat2 V;
    V << c, -s, s, c;
    Mat2 D = Mat2::Zero();
    D(0, 0) = alpha * alpha;
    D(1, 1) = beta * beta;
    return GaussianEllipse(mu, V * D * V.transpose());
  }

  struct Axes {
    double alpha, beta, theta;
  };

  Axes axes() const {
    Eigen::SelfAdjointEigenSolver<Mat2> es(sigma);
    // eigenvalues ascending: [beta^2, alpha^2]
    const double b2 = es.eigenvalues()[0];
    const double a2 = es.eigenvalues()[1];
    if (b2 <= 0) throw NotAnEllipse("sigma not positive definite");
    Vec2 major = es.eigenvectors().col(1);
    double theta = std::atan2(major.y(), major.x());
    // wrap to (-pi/2, pi/2]
    if (theta > M_PI / 2) theta -= M_PI;
    if (theta <= -M_PI / 2) theta += M_PI;
    if (std::abs(a2 - b2) < 1e-15) theta = 0.0;
    return {std::sqrt(a2), std::sqrt(b2), theta};
  }

  double theta() const { return axes().theta; }
  double alpha() const { return axes().alpha; }
  double beta() const { return axes().beta; }

  double area() const {
    const double det = sigma.determinant();
    return det > 0 ? M_PI * std::sqrt(det) : 0.0;
  }

  /// Boundary polygon, counter-clockwise.
  std::vector<Vec2> boundary(int n = 256) const {
    Eigen::SelfAdjointEigenSolver<Mat2> es(sigma);
    const double b = std::sqrt(std::max(es.eigenvalues()[0], 0.0));
    const double a = std::sqrt(std::max(es.eigenvalues()[1], 0.0));
    Mat2 V;
    V.col(0) = es.eigenvectors().col(1);
    V.col(1) = es.eigenvectors().col(0);
    if (V.determinant() < 0) V.col(1) = -V.col(1);
    std::vector<Vec2> pts(n);
    for (int i = 0; i < n; ++i) {
      const double t = 2.0 * M_PI * i / n;
      pts[i] = mu + V * Vec2(a * std::cos(t), b * std::sin(t));
    }
    return pts;
  }
};

/// Homogeneous dual conic (tangent-line form), 3x3 symmetric. A real
/// ellipse normalizes to C(2,2) = -1 with
///   C = [[sigma - mu mu^T, -mu], [-mu^T, -1]].
struct DualConic {
  Mat3 C = Mat3::Zero();

  DualConic() = default;
  explicit DualConic(const Mat3& C_) : C(0.5 * (C_ + C_.transpose())) {}

  /// Scale so that C(2,2) = -1.
  DualConic normalized() const {
    const double d = -C(2, 2);
    if (std::abs(d) < 1e-15) throw NotAnEllipse("dual conic has C22 ~ 0");
    return DualConic(Mat3(C / d));
  }
};

inline GaussianEllipse conic_to_gaussian(const DualConic& conic) {
  const Mat3 C = conic.normalized().C;
  const Vec2 mu = -C.block<2, 1>(0, 2);
  const Mat2 sigma = C.topLeftCorner<2, 2>() + mu * mu.transpose();
  Eigen::SelfAdjointEigenSolver<Mat2> es(sigma);
  if (es.eigenvalues()[0] <= 1e-15 * std::max(1.0, es.eigenvalues()[1])) {
    throw NotAnEllipse("dual conic is not a real ellipse");
  }
  return GaussianEllipse(mu, sigma);
}

inline DualConic gaussian_to_conic(const GaussianEllipse& g) {
  Mat3 C;
  C.topLeftCorner<2, 2>() = g.sigma - g.mu * g.mu.transpose();
  C.block<2, 1>(0, 2) = -g.mu;
  C.block<1, 2>(2, 0) = -g.mu.transpose();
  C(2, 2) = -1.0;
  return DualConic(C);
}

/// Direct least-squares conic fit with ellipse constraint
/// (Fitzgibbon/Halir-Flusser) on >= 5 points of the normalized plane;
/// returns the dual form normalized to C(2,2) = -1.
inline DualConic fit_dual_conic(const std::vector<Vec2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 5) throw DegenerateInput("conic fit needs >= 5 points");

  // condition the data: shift to centroid, scale to RMS sqrt(2)
  Vec2 m = Vec2::Zero();
  for (const auto& p : points) m += p;
  m /= n;
  double rms = 0;
  for (const auto& p : points) rms += (p - m).squaredNorm();
  rms = std::sqrt(rms / n);
  if (rms < 1e-12) throw DegenerateInput("points coincide");
  const double s = std::sqrt(2.0) / rms;

  Eigen::MatrixXd D1(n, 3), D2(n, 3);
  for (int i = 0; i < n; ++i) {
    const double x = (points[i].x() - m.x()) * s;
    const double y = (points[i].y() - m.y()) * s;
    D1.row(i) << x * x, x * y, y * y;
    D2.row(i) << x, y, 1.0;
  }
  const Mat3 S1 = D1.transpose() * D1;
  const Mat3 S2 = D1.transpose() * D2;
  const Mat3 S3 = D2.transpose() * D2;
  Eigen::FullPivLU<Mat3> lu(S3);
  if (!lu.isInvertible()) throw DegenerateInput("collinear or repeated points");
  const Mat3 T = -lu.solve(S2.transpose());
  const Mat3 M = S1 + S2 * T;
  Mat3 Mr;
  Mr.row(0) = M.row(2) / 2.0;
  Mr.row(1) = -M.row(1);
  Mr.row(2) = M.row(0) / 2.0;

  Eigen::EigenSolver<Mat3> es(Mr);
  Vec3 abc = Vec3::Zero();
  bool found = false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(es.eigenvalues()[i].imag()) > 1e-9) continue;
    Vec3 v = es.eigenvectors().col(i).real();
    const double cond = 4.0 * v[0] * v[2] - v[1] * v[1];
    if (cond > 0) {
      abc = v / std::sqrt(cond);  // scale so 4ac - b^2 = 1
      found = true;
      break;
    }
  }
  if (!found) throw NotAnEllipse("fit has no ellipse solution");
  const Vec3 def = T * abc;

  // primal conic in conditioned coordinates
  Mat3 Ap;
  Ap << abc[0], abc[1] / 2, def[0] / 2,  //
      abc[1] / 2, abc[2], def[1] / 2,    //
      def[0] / 2, def[1] / 2, def[2];
  // undo conditioning: x' = H x with H = [[s,0,-s*mx],[0,s,-s*my],[0,0,1]]
  Mat3 H;
  H << s, 0, -s * m.x(), 0, s, -s * m.y(), 0, 0, 1;
  const Mat3 A = H.transpose() * Ap * H;

  // dual = adjugate of the primal
  Mat3 Adj;
  Adj(0, 0) = A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1);
  Adj(0, 1) = -(A(1, 0) * A(2, 2) - A(1, 2) * A(2, 0));
  Adj(0, 2) = A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0);
  Adj(1, 0) = -(A(0, 1) * A(2, 2) - A(0, 2) * A(2, 1));
  Adj(1, 1) = A(0, 0) * A(2, 2) - A(0, 2) * A(2, 0);
  Adj(1, 2) = -(A(0, 0) * A(2, 1) - A(0, 1) * A(2, 0));
  Adj(2, 0) = A(0, 1) * A(1, 2) - A(0, 2) * A(1, 1);
  Adj(2, 1) = -(A(0, 0) * A(1, 2) - A(0, 2) * A(1, 0));
  Adj(2, 2) = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);

  DualConic dual(Adj.transpose());
  DualConic out = dual.normalized();
  // reject hyperbola/parabola that survived in dual form
  conic_to_gaussian(out);
  return out;
}

}  // namespace oslam
