#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "oslam/errors.hpp"
#include "oslam/metrics.hpp"
#include "oslam/pose.hpp"
#include "oslam/quadric.hpp"

namespace oslam {

/// One elliptical observation of an object: camera c at keyframe t.
struct Observation {
  int camera_id = 0;
  int frame_id = 0;
  GaussianEllipse ellipse;  // observed, normalized plane
  Pose pose;                // world-to-camera at that frame
};

/// Flat spatiotemporal union of observations of one object, plus the 3D
/// points associated with it (their centroid drives the center residual).
struct ObservationSet {
  std::vector<Observation> observations;
  std::vector<Vec3> associated_points;
  Vec3 point_centroid = Vec3::Zero();

  static ObservationSet make(std::vector<Observation> obs,
                             std::vector<Vec3> points = {}) {
    ObservationSet set;
    set.observations = std::move(obs);
    set.associated_points = std::move(points);
    if (!set.associated_points.empty()) {
      Vec3 c = Vec3::Zero();
      for (const auto& p : set.associated_points) c += p;
      set.point_centroid = c / static_cast<double>(set.associated_points.size());
    }
    return set;
  }

  bool has_points() const { return !associated_points.empty(); }
};

struct EstimatorConfig {
  double w_center = 1.0;
  int max_iterations = 50;
  double convergence_tol = 1e-8;
  double robust_loss_scale = 1.0;  // Huber delta on per-observation residual
  int min_observations = 3;
};

namespace detail {

inline EllipsoidParams apply_increment(const EllipsoidParams& e,
                                       const Eigen::Matrix<double, 9, 1>& dx) {
  EllipsoidParams out;
  out.center = e.center + dx.head<3>();
  out.rotation = e.rotation * so3_exp(dx.segment<3>(3));
  out.semi_axes = (e.semi_axes.array().log() + dx.tail<3>().array()).exp();
  return out;
}

// 5-vector whose squared norm is exactly W2^2 of the two Gaussians:
// [dmu; s11; sqrt(2) s12; s22] with S = sqrt(sigma_est) - sqrt(sigma_obs).
inline Eigen::Matrix<double, 5, 1> w2_residual_block(
    const GaussianEllipse& est, const GaussianEllipse& obs) {
  Eigen::Matrix<double, 5, 1> r;
  r.head<2>() = est.mu - obs.mu;
  const Mat2 S = sym_sqrt(est.sigma) - sym_sqrt(obs.sigma);
  r(2) = S(0, 0);
  r(3) = std::sqrt(2.0) * S(0, 1);
  r(4) = S(1, 1);
  return r;
}

inline double huber_cost(double norm, double delta) {
  return norm <= delta ? norm * norm : 2.0 * delta * norm - delta * delta;
}

inline double huber_sqrt_weight(double norm, double delta) {
  if (norm <= delta || norm < 1e-300) return 1.0;
  return std::sqrt(huber_cost(norm, delta)) / norm;
}

}  // namespace detail

/// Per-observation squared Wasserstein residuals of `params` against the
/// set. Observations the quadric cannot project into are flagged invalid
/// and excluded; their count is reported.
struct ProjectionResiduals {
  std::vector<double> values;  // aligned with observations; 0 when invalid
  std::vector<bool> valid;
  int excluded = 0;

  double sum() const {
    double s = 0;
    for (size_t i = 0; i < values.size(); ++i) {
      if (valid[i]) s += values[i];
    }
    return s;
  }
};

inline ProjectionResiduals residual_proj(const EllipsoidParams& params,
                                         const ObservationSet& obs) {
  ProjectionResiduals out;
  out.values.resize(obs.observations.size(), 0.0);
  out.valid.resize(obs.observations.size(), false);
  const DualQuadric q = DualQuadric::from_ellipsoid(params);
  for (size_t i = 0; i < obs.observations.size(); ++i) {
    try {
      const GaussianEllipse est =
          conic_to_gaussian(project_quadric(q, obs.observations[i].pose));
      out.values[i] = wasserstein2_sq(obs.observations[i].ellipse, est);
      out.valid[i] = true;
    } catch (const Error&) {
      ++out.excluded;
    }
  }
  return out;
}

/// Center residual C_est - C_obs; empty when there are no associated
/// points (the term is then omitted from the cost).
inline std::optional<Vec3> residual_center(const EllipsoidParams& params,
                                           const ObservationSet& obs) {
  if (!obs.has_points()) return std::nullopt;
  return params.center - obs.point_centroid;
}

/// Robustified joint cost: sum of Huber-weighted W2^2 terms plus
/// w_center * n_valid * ||center residual||^2.
inline double quadric_cost(const EllipsoidParams& params,
                           const ObservationSet& obs,
                           const EstimatorConfig& cfg) {
  const DualQuadric q = DualQuadric::from_ellipsoid(params);
  double cost = 0;
  int n_valid = 0;
  for (const auto& o : obs.observations) {
    try {
      const GaussianEllipse est = conic_to_gaussian(project_quadric(q, o.pose));
      const auto r = detail::w2_residual_block(est, o.ellipse);
      cost += detail::huber_cost(r.norm(), cfg.robust_loss_scale);
      ++n_valid;
    } catch (const Error&) {
    }
  }
  if (const auto rc = residual_center(params, obs)) {
    cost += cfg.w_center * n_valid * rc->squaredNorm();
  }
  return cost;
}

/// Initial ellipsoid: centroid of associated points when present, else
/// midpoint triangulation of the two most-separated bearing rays through
/// the observation means; isotropic axes scaled by depth and apparent
/// size; identity orientation.
inline EllipsoidParams init_quadric(const ObservationSet& obs,
                                    const EstimatorConfig& cfg = {}) {
  if (obs.observations.empty()) {
    throw InsufficientObservations("no observations to initialize from");
  }
  EllipsoidParams e;
  if (obs.has_points()) {
    e.center = obs.point_centroid;
  } else {
    if (static_cast<int>(obs.observations.size()) < cfg.min_observations &&
        obs.observations.size() < 2) {
      throw InsufficientObservations("too few observations to triangulate");
    }
    // bearing rays through the observation means
    std::vector<Vec3> origins, dirs;
    for (const auto& o : obs.observations) {
      const Pose inv = o.pose.inverse();
      origins.push_back(o.pose.center());
      dirs.push_back(
          (inv.R * Vec3(o.ellipse.mu.x(), o.ellipse.mu.y(), 1.0)).normalized());
    }
    double best = 1.0;
    int bi = -1, bj = -1;
    for (size_t i = 0; i < dirs.size(); ++i) {
      for (size_t j = i + 1; j < dirs.size(); ++j) {
        const double c = std::abs(dirs[i].dot(dirs[j]));
        if (c < best) {
          best = c;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    if (bi < 0 || best > std::cos(1.0 * M_PI / 180.0)) {
      throw TriangulationDegenerate("bearing rays nearly parallel");
    }
    // midpoint of closest approach
    const Vec3 r = origins[bi] - origins[bj];
    const Vec3& d1 = dirs[bi];
    const Vec3& d2 = dirs[bj];
    const double b = d1.dot(d2);
    const double den = 1.0 - b * b;
    const double s = (b * d2.dot(r) - d1.dot(r)) / den;
    const double u = (d2.dot(r) - b * d1.dot(r)) / den;
    e.center = 0.5 * ((origins[bi] + s * d1) + (origins[bj] + u * d2));
  }
  double size = 0;
  for (const auto& o : obs.observations) {
    const double depth = (e.center - o.pose.center()).norm();
    const auto ax = o.ellipse.axes();
    size += depth * std::sqrt(ax.alpha * ax.beta);
  }
  size /= static_cast<double>(obs.observations.size());
  e.semi_axes = Vec3::Constant(std::max(size, 1e-3));
  e.rotation = Mat3::Identity();
  return e;
}

struct OptimizeResult {
  EllipsoidParams params;
  double final_cost = 0;
  int iterations = 0;
  bool converged = false;
  int excluded_observations = 0;
};

namespace detail {

struct ResidualEval {
  Eigen::VectorXd r;
  std::vector<bool> mask;
  int n_valid = 0;
};

// Residual vector under a FIXED validity mask (rows of invalid
// observations are zero). Used for finite differencing.
inline Eigen::VectorXd residual_vector_masked(const EllipsoidParams& params,
                                              const ObservationSet& obs,
                                              const EstimatorConfig& cfg,
                                              const std::vector<bool>& mask,
                                              int n_valid) {
  const int rows =
      5 * static_cast<int>(obs.observations.size()) + (obs.has_points() ? 3 : 0);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(rows);
  const DualQuadric q = DualQuadric::from_ellipsoid(params);
  for (size_t i = 0; i < obs.observations.size(); ++i) {
    if (!mask[i]) continue;
    try {
      const GaussianEllipse est =
          conic_to_gaussian(project_quadric(q, obs.observations[i].pose));
      auto block = w2_residual_block(est, obs.observations[i].ellipse);
      block *= huber_sqrt_weight(block.norm(), cfg.robust_loss_scale);
      r.segment<5>(5 * i) = block;
    } catch (const Error&) {
      // leave zeros; the mask is frozen during differencing
    }
  }
  if (obs.has_points()) {
    const Vec3 rc = params.center - obs.point_centroid;
    r.tail<3>() = std::sqrt(cfg.w_center * n_valid) * rc;
  }
  return r;
}

inline ResidualEval evaluate_residuals(const EllipsoidParams& params,
                                       const ObservationSet& obs,
                                       const EstimatorConfig& cfg) {
  ResidualEval ev;
  ev.mask.resize(obs.observations.size(), false);
  const DualQuadric q = DualQuadric::from_ellipsoid(params);
  for (size_t i = 0; i < obs.observations.size(); ++i) {
    try {
      project_quadric(q, obs.observations[i].pose);
      ev.mask[i] = true;
      ++ev.n_valid;
    } catch (const Error&) {
    }
  }
  ev.r = residual_vector_masked(params, obs, cfg, ev.mask, ev.n_valid);
  return ev;
}

}  // namespace detail

/// Central finite-difference Jacobian of the (masked, Huber-weighted)
/// residual vector with respect to the 9-DOF increment
/// [d_center; d_rotation; d_log_axes] at the given state.
inline Eigen::MatrixXd estimation_jacobian(const EllipsoidParams& params,
                                           const ObservationSet& obs,
                                           const EstimatorConfig& cfg,
                                           double step = 1e-6) {
  const auto base = detail::evaluate_residuals(params, obs, cfg);
  Eigen::MatrixXd J(base.r.size(), 9);
  for (int j = 0; j < 9; ++j) {
    Eigen::Matrix<double, 9, 1> dx = Eigen::Matrix<double, 9, 1>::Zero();
    dx[j] = step;
    const Eigen::VectorXd rp = detail::residual_vector_masked(
        detail::apply_increment(params, dx), obs, cfg, base.mask, base.n_valid);
    dx[j] = -step;
    const Eigen::VectorXd rm = detail::residual_vector_masked(
        detail::apply_increment(params, dx), obs, cfg, base.mask, base.n_valid);
    J.col(j) = (rp - rm) / (2.0 * step);
  }
  return J;
}

/// Damped (Levenberg-Marquardt) minimization of the joint Wasserstein +
/// center cost over the 9-DOF manifold parametrization. Semi-axes stay
/// positive by the log parametrization; accepted steps never increase
/// the cost.
inline OptimizeResult optimize_quadric(const EllipsoidParams& init,
                                       const ObservationSet& obs,
                                       const EstimatorConfig& cfg = {}) {
  if (!init.is_valid()) throw DegenerateInput("invalid initial ellipsoid");
  auto base = detail::evaluate_residuals(init, obs, cfg);
  if (base.n_valid < cfg.min_observations) {
    throw InsufficientObservations("fewer valid observations than minimum");
  }

  OptimizeResult res;
  res.params = init;
  double cost = quadric_cost(init, obs, cfg);
  res.final_cost = cost;
  res.excluded_observations =
      static_cast<int>(obs.observations.size()) - base.n_valid;
  if (cost < 1e-14) {
    res.converged = true;
    return res;
  }

  double lambda = 1e-4;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    res.iterations = iter + 1;
    const Eigen::MatrixXd J = estimation_jacobian(res.params, obs, cfg);
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * base.r;

    bool accepted = false;
    // keep the damping floor proportional to the problem scale so flat
    // (unobservable) directions cannot take unbounded steps
    const double diag_floor =
        std::max(1e-8, 1e-6 * A.diagonal().maxCoeff());
    while (lambda <= 1e12) {
      Eigen::MatrixXd damped = A;
      damped.diagonal() += lambda * A.diagonal().cwiseMax(diag_floor);
      const Eigen::Matrix<double, 9, 1> dx = -damped.ldlt().solve(g);
      const EllipsoidParams cand = detail::apply_increment(res.params, dx);
      const double cand_cost = quadric_cost(cand, obs, cfg);
      if (cand_cost < cost) {
        const double drop = cost - cand_cost;
        res.params = cand;
        cost = cand_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        base = detail::evaluate_residuals(res.params, obs, cfg);
        res.excluded_observations =
            static_cast<int>(obs.observations.size()) - base.n_valid;
        if (drop <= cfg.convergence_tol * std::max(cost, 1e-16) ||
            cost < 1e-14) {
          res.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted || res.converged) break;
  }
  res.final_cost = cost;
  // a stall (no acceptable step) with small gradient counts as converged
  if (!res.converged) {
    const Eigen::MatrixXd J = estimation_jacobian(res.params, obs, cfg);
    res.converged = (J.transpose() * base.r).norm() < 1e-10;
  }
  return res;
}

}  // namespace oslam
