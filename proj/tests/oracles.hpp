// Independent reference computations used to freeze expected values in
// tests. Everything here is deliberately implemented by a different route
// than the library code it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

using Eigen::Vector2d;
using Eigen::Vector3d;

/// Exact parametric samples of the ellipse with semi-axes (alpha, beta),
/// orientation theta, center mu.
inline std::vector<Vector2d> ellipse_points(const Vector2d& mu, double alpha,
                                            double beta, double theta, int n) {
  std::vector<Vector2d> pts(n);
  const double c = std::cos(theta), s = std::sin(theta);
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * i / n;
    const double ex = alpha * std::cos(t);
    const double ey = beta * std::sin(t);
    pts[i] = Vector2d(mu.x() + c * ex - s * ey, mu.y() + s * ex + c * ey);
  }
  return pts;
}

/// Closed form: a unit sphere at distance d projects (normalized plane) to
/// a circle of radius 1/sqrt(d^2 - 1).
inline double sphere_silhouette_radius(double d) {
  return 1.0 / std::sqrt(d * d - 1.0);
}

/// Lens area of two unit circles with center distance d < 2.
inline double unit_circle_lens_area(double d) {
  return 2.0 * std::acos(d / 2.0) - (d / 2.0) * std::sqrt(4.0 - d * d);
}

inline double unit_circle_iou(double d) {
  const double lens = unit_circle_lens_area(d);
  return lens / (2.0 * M_PI - lens);
}

/// Intersection volume of two spheres of radius r at center distance d
/// (spherical lens, valid for 0 <= d <= 2r).
inline double sphere_lens_volume(double r, double d) {
  if (d >= 2.0 * r) return 0.0;
  return M_PI * (2.0 * r - d) * (2.0 * r - d) * (4.0 * r + d) / 12.0;
}

inline double sphere_pair_iou(double r, double d) {
  const double inter = sphere_lens_volume(r, d);
  const double vol = 4.0 / 3.0 * M_PI * r * r * r;
  return inter / (2.0 * vol - inter);
}

/// Scalar root find by bisection; f must bracket a sign change on [lo, hi].
inline double bisect(const std::function<double(double)>& f, double lo,
                     double hi, double tol = 1e-14, int iters = 200) {
  double flo = f(lo);
  for (int i = 0; i < iters && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((flo < 0) == (fm < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Midpoint of closest approach of two rays (o1 + s d1, o2 + u d2).
inline Vector3d two_ray_midpoint(const Vector3d& o1, const Vector3d& d1,
                                 const Vector3d& o2, const Vector3d& d2) {
  const Vector3d r = o1 - o2;
  const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2);
  const double d = d1.dot(r), e = d2.dot(r);
  const double den = a * c - b * b;
  const double s = (b * e - c * d) / den;
  const double u = (a * e - b * d) / den;
  return 0.5 * ((o1 + s * d1) + (o2 + u * d2));
}

/// Brute-force DBSCAN reference: O(n^2) neighborhoods, union-find over
/// core points, clusters numbered by their lowest core index, border
/// points claimed by the lowest-numbered adjacent cluster. This matches
/// deterministic index-ordered queue expansion.
inline std::vector<int> dbscan_reference(
    const std::vector<Eigen::VectorXd>& pts, double eps, int min_pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> labels(n, -1);
  if (n == 0) return labels;
  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if ((pts[i] - pts[j]).norm() <= eps) nbr[i].push_back(j);
    }
  }
  std::vector<bool> core(n, false);
  for (int i = 0; i < n; ++i) {
    core[i] = static_cast<int>(nbr[i].size()) >= min_pts;
  }
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j : nbr[i]) {
      if (core[j]) {
        const int a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  // order clusters by lowest core index
  std::vector<int> cluster_of_root(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const int r = find(i);
    if (cluster_of_root[r] < 0) cluster_of_root[r] = next++;
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) labels[i] = cluster_of_root[find(i)];
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (int j : nbr[i]) {
      if (core[j]) {
        const int c = cluster_of_root[find(j)];
        if (best < 0 || c < best) best = c;
      }
    }
    labels[i] = best;
  }
  return labels;
}

/// Hand-derived first-order model of an SE(3) pose-graph cycle, solved as
/// one dense linear least squares. Nodes 0..n-1 start at ground-truth
/// positions x̄ with identity rotations; node 0 is anchored. Odometry edge
/// k measures the step x_{k+1} - x_k as m[k] (k < n-1); the closing edge
/// (n-1 -> 0) measures x_0 - x_{n-1} as m[n-1]. For the residual
/// log(T_ij^{-1} N_i^{-1} N_j) the expansion around the ground truth is
///   r_rot   = th_j - th_i
///   r_trans = (ū_ij - m_ij) + dx_j - dx_i - th_i × ū_ij
/// (the source rotation enters because the step is expressed in frame i).
/// Exact up to O(drift^2). Returns per-node (position, rotation vector).
struct LinearizedNode {
  Vector3d position;
  Vector3d rotation;  // so(3) vector
};

inline std::vector<LinearizedNode> se3_loop_linearized(
    const std::vector<Vector3d>& gt_positions, const std::vector<Vector3d>& m,
    const std::vector<double>& w) {
  const int n = static_cast<int>(gt_positions.size());
  const int nv = 6 * (n - 1);  // [th_k; dx_k] for k = 1..n-1
  const int rows = 6 * n;      // n edges, 6 rows each
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, nv);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  auto th_col = [&](int k) { return 6 * (k - 1); };
  auto dx_col = [&](int k) { return 6 * (k - 1) + 3; };
  auto skew = [](const Vector3d& v) {
    Eigen::Matrix3d S;
    S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return S;
  };
  for (int e = 0; e < n; ++e) {
    const int i = e;
    const int j = (e + 1) % n;
    const Vector3d u = gt_positions[j] - gt_positions[i];
    const double sw = std::sqrt(w[e]);
    const int r0 = 6 * e;  // rotation rows
    const int r3 = r0 + 3; // translation rows
    if (i > 0) {
      A.block<3, 3>(r0, th_col(i)) -= sw * Eigen::Matrix3d::Identity();
      A.block<3, 3>(r3, dx_col(i)) -= sw * Eigen::Matrix3d::Identity();
      A.block<3, 3>(r3, th_col(i)) += sw * skew(u);  // -th_i × u = [u]× th_i
    }
    if (j > 0) {
      A.block<3, 3>(r0, th_col(j)) += sw * Eigen::Matrix3d::Identity();
      A.block<3, 3>(r3, dx_col(j)) += sw * Eigen::Matrix3d::Identity();
    }
    b.segment<3>(r3) = sw * (m[e] - u);
  }
  const Eigen::VectorXd v =
      (A.transpose() * A).ldlt().solve(A.transpose() * b);
  std::vector<LinearizedNode> out(n);
  out[0] = {gt_positions[0], Vector3d::Zero()};
  for (int k = 1; k < n; ++k) {
    out[k].rotation = v.segment<3>(th_col(k));
    out[k].position = gt_positions[k] + v.segment<3>(dx_col(k));
  }
  return out;
}

/// Weighted least squares for the same cycle with rotations pinned at
/// identity (translation-only distribution of the drift). Edge k measures
/// x_{k+1} - x_k = m[k]; the closing edge measures 0 - x_{n-1} = m[n-1].
/// Not the SE(3) optimum (rotation coupling is first order); used as an
/// upper bound on the optimal cost.
inline std::vector<Vector3d> chain_loop_least_squares(
    const std::vector<Vector3d>& m, const std::vector<double>& w) {
  const int ne = static_cast<int>(m.size());
  const int nv = ne - 1;  // free nodes 1..n-1
  std::vector<Vector3d> x(nv, Vector3d::Zero());
  for (int dim = 0; dim < 3; ++dim) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ne, nv);
    Eigen::VectorXd b(ne);
    for (int k = 0; k < ne; ++k) {
      const double sw = std::sqrt(w[k]);
      if (k == 0) {
        A(0, 0) = sw;  // x1 = m0
      } else if (k < ne - 1) {
        A(k, k) = sw;
        A(k, k - 1) = -sw;  // x_{k+1} - x_k = m_k
      } else {
        A(k, nv - 1) = -sw;  // -x_{n-1} = m_{n-1}
      }
      b(k) = sw * m[k](dim);
    }
    Eigen::VectorXd sol = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    for (int i = 0; i < nv; ++i) x[i](dim) = sol(i);
  }
  return x;
}

}  // namespace oracles
