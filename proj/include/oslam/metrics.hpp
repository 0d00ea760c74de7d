#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "oslam/ellipse.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Symmetric PSD square root with eigenvalue floor to stay finite on
/// near-degenerate input.
inline Mat2 sym_sqrt(const Mat2& S, double floor = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(S);
  Vec2 d = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

/// Squared 2-Wasserstein distance in the simplified Frobenius form:
///   ||mu1 - mu2||^2 + ||sigma1^{1/2} - sigma2^{1/2}||_F^2.
/// Note this equals the Bures-Wasserstein distance only when the two
/// covariances commute; the simplified form is used as-is.
inline double wasserstein2_sq(const GaussianEllipse& g1,
                              const GaussianEllipse& g2) {
  const Mat2 d = sym_sqrt(g1.sigma) - sym_sqrt(g2.sigma);
  return (g1.mu - g2.mu).squaredNorm() + d.squaredNorm();
}

namespace detail {

inline double polygon_area(const std::vector<Vec2>& poly) {
  const int n = static_cast<int>(poly.size());
  if (n < 3) return 0.0;
  double a = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman clip of a convex subject against a convex CCW clip
/// polygon.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject,
                                     const std::vector<Vec2>& clip) {
  const int m = static_cast<int>(clip.size());
  for (int e = 0; e < m && !subject.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % m];
    const Vec2 dir = b - a;
    auto inside = [&](const Vec2& p) {
      return dir.x() * (p.y() - a.y()) - dir.y() * (p.x() - a.x()) >= 0.0;
    };
    std::vector<Vec2> out;
    out.reserve(subject.size() + 1);
    const int n = static_cast<int>(subject.size());
    for (int i = 0; i < n; ++i) {
      const Vec2& cur = subject[i];
      const Vec2& nxt = subject[(i + 1) % n];
      const bool cin = inside(cur);
      const bool nin = inside(nxt);
      if (cin) out.push_back(cur);
      if (cin != nin) {
        const double da = dir.x() * (cur.y() - a.y()) - dir.y() * (cur.x() - a.x());
        const double db = dir.x() * (nxt.y() - a.y()) - dir.y() * (nxt.x() - a.x());
        const double t = da / (da - db);
        out.push_back(cur + t * (nxt - cur));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace detail

/// Area IoU of two ellipse interiors by fixed polygonal discretization
/// (deterministic, ~1e-3 accurate at the default 256 vertices). Disjoint
/// bounding boxes short-circuit to 0 before any polygon is built; the
/// ellipse AABB half-extents are sqrt(diag(sigma)).
inline double ellipse_iou(const GaussianEllipse& g1, const GaussianEllipse& g2,
                          int vertices = 256) {
  const Vec2 h1 = g1.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
  const Vec2 h2 = g2.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (g1.mu.x() + h1.x() < g2.mu.x() - h2.x() ||
      g2.mu.x() + h2.x() < g1.mu.x() - h1.x() ||
      g1.mu.y() + h1.y() < g2.mu.y() - h2.y() ||
      g2.mu.y() + h2.y() < g1.mu.y() - h1.y()) {
    return 0.0;
  }
  const auto p1 = g1.boundary(vertices);
  const auto p2 = g2.boundary(vertices);
  const double inter = detail::polygon_area(detail::clip_convex(p1, p2));
  const double a1 = detail::polygon_area(p1);
  const double a2 = detail::polygon_area(p2);
  const double uni = a1 + a2 - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace oslam
