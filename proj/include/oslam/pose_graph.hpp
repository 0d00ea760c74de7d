#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "oslam/errors.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Relative-pose constraint between two nodes: t_ij measures the pose of
/// node j expressed in node i's frame (t_ij ≈ N_i^{-1} ∘ N_j for
/// body-to-world nodes N).
struct PoseGraphEdge {
  int i = 0;
  int j = 0;
  Pose t_ij;
  double weight = 1.0;
  bool is_loop = false;
};

/// Pose graph over SE(3) body-to-world nodes with one anchored node.
struct PoseGraph {
  std::vector<Pose> nodes;
  std::vector<PoseGraphEdge> edges;
  int anchor = 0;
};

inline Vec6 edge_residual(const Pose& node_i, const Pose& node_j,
                          const Pose& t_ij) {
  return se3_log(t_ij.inverse().compose(node_i.inverse()).compose(node_j));
}

inline Vec6 pose_graph_residual(const PoseGraph& g, const PoseGraphEdge& e) {
  return edge_residual(g.nodes[e.i], g.nodes[e.j], e.t_ij);
}

inline double pose_graph_cost(const PoseGraph& g) {
  double c = 0;
  for (const auto& e : g.edges) {
    c += e.weight * pose_graph_residual(g, e).squaredNorm();
  }
  return c;
}

struct PoseGraphResult {
  double initial_cost = 0;
  double final_cost = 0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// Damped Gauss-Newton over Σ w ||log(T_ij^{-1} T_i^{-1} T_j)||^2 with
/// right-multiplied node increments; the anchor never moves and accepted
/// steps never increase the cost. On numerical failure the graph is
/// restored and the result flagged diverged.
inline PoseGraphResult optimize_pose_graph(PoseGraph& g, int max_iterations = 50,
                                           double tol = 1e-12) {
  PoseGraphResult res;
  const int n = static_cast<int>(g.nodes.size());
  if (n == 0 || g.edges.empty()) return res;
  const auto backup = g.nodes;
  double cost = pose_graph_cost(g);
  res.initial_cost = cost;
  res.final_cost = cost;
  if (!std::isfinite(cost)) {
    res.diverged = true;
    return res;
  }
  if (cost < 1e-18) {
    res.converged = true;
    return res;
  }

  auto var_index = [&](int node) {
    if (node == g.anchor) return -1;
    return node < g.anchor ? node : node - 1;
  };
  const int nv = 6 * (n - 1);
  const double h = 1e-6;
  double lambda = 1e-6;

  for (int iter = 0; iter < max_iterations; ++iter) {
    res.iterations = iter + 1;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nv);
    for (const auto& e : g.edges) {
      const Vec6 r = pose_graph_residual(g, e);
      const Pose& Ni = g.nodes[e.i];
      const Pose& Nj = g.nodes[e.j];
      Eigen::Matrix<double, 6, 6> Ji, Jj;
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d[k] = h;
        const Pose dp = se3_exp(d);
        d[k] = -h;
        const Pose dm = se3_exp(d);
        Ji.col(k) = (edge_residual(Ni.compose(dp), Nj, e.t_ij) -
                     edge_residual(Ni.compose(dm), Nj, e.t_ij)) /
                    (2 * h);
        Jj.col(k) = (edge_residual(Ni, Nj.compose(dp), e.t_ij) -
                     edge_residual(Ni, Nj.compose(dm), e.t_ij)) /
                    (2 * h);
      }
      const int vi = var_index(e.i);
      const int vj = var_index(e.j);
      if (vi >= 0) {
        H.block<6, 6>(6 * vi, 6 * vi) += e.weight * Ji.transpose() * Ji;
        b.segment<6>(6 * vi) += e.weight * Ji.transpose() * r;
      }
      if (vj >= 0) {
        H.block<6, 6>(6 * vj, 6 * vj) += e.weight * Jj.transpose() * Jj;
        b.segment<6>(6 * vj) += e.weight * Jj.transpose() * r;
      }
      if (vi >= 0 && vj >= 0) {
        H.block<6, 6>(6 * vi, 6 * vj) += e.weight * Ji.transpose() * Jj;
        H.block<6, 6>(6 * vj, 6 * vi) += e.weight * Jj.transpose() * Ji;
      }
    }

    bool accepted = false;
    while (lambda <= 1e10) {
      Eigen::MatrixXd damped = H;
      damped.diagonal() += lambda * damped.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd dx = -damped.ldlt().solve(b);
      if (!dx.allFinite()) break;
      auto candidate = g.nodes;
      for (int k = 0; k < n; ++k) {
        const int v = var_index(k);
        if (v < 0) continue;
        candidate[k] = g.nodes[k].compose(se3_exp(dx.segment<6>(6 * v)));
      }
      double cand_cost = 0;
      for (const auto& e : g.edges) {
        cand_cost += e.weight *
                     edge_residual(candidate[e.i], candidate[e.j], e.t_ij)
                         .squaredNorm();
      }
      if (std::isfinite(cand_cost) && cand_cost < cost) {
        const double drop = cost - cand_cost;
        g.nodes = std::move(candidate);
        cost = cand_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (drop <= tol * std::max(cost, 1e-16) || cost < 1e-18) {
          res.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      res.converged = true;  // stalled at a (local) optimum
      break;
    }
    if (res.converged) break;
  }
  res.final_cost = cost;
  if (!std::isfinite(cost) || cost > res.initial_cost) {
    g.nodes = backup;
    res.final_cost = res.initial_cost;
    res.diverged = true;
  }
  return res;
}

}  // namespace oslam
