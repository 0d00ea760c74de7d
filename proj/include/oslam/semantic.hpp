#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "oslam/errors.hpp"
#include "oslam/pose.hpp"

namespace oslam {

/// Open-vocabulary feature vector; kept at unit L2 norm.
using Embedding = Eigen::VectorXd;

inline Embedding normalize_embedding(const Embedding& v) {
  const double n = v.norm();
  if (n < 1e-9) throw ZeroVector("embedding has ~zero norm");
  return v / n;
}

inline double cosine(const Embedding& a, const Embedding& b) {
  const double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
  if (den < 1e-300) return 0.0;
  return std::clamp(a.dot(b) / den, -1.0, 1.0);
}

/// Weighted fusion of the three per-view crops (full image, masked with
/// background, masked without background), renormalized.
inline Embedding fuse_view_features(const Embedding& f_full,
                                    const Embedding& f_mask_bg,
                                    const Embedding& f_mask_nobg,
                                    const Vec3& weights) {
  if (weights.minCoeff() < 0 || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw DegenerateInput("fusion weights must be nonnegative and sum to 1");
  }
  const Embedding sum =
      weights[0] * f_full + weights[1] * f_mask_bg + weights[2] * f_mask_nobg;
  return normalize_embedding(sum);
}

/// Density-based clustering, Euclidean metric, deterministic: clusters
/// are discovered by scanning points in index order and expanding core
/// points breadth-first in index order. Returns -1 for noise.
inline std::vector<int> dbscan(const std::vector<Embedding>& points,
                               double eps, int min_pts) {
  const int n = static_cast<int>(points.size());
  std::vector<int> labels(n, -1);
  if (n == 0) return labels;

  std::vector<std::vector<int>> nbr(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if ((points[i] - points[j]).norm() <= eps) nbr[i].push_back(j);
    }
  }
  std::vector<bool> core(n);
  for (int i = 0; i < n; ++i) {
    core[i] = static_cast<int>(nbr[i].size()) >= min_pts;
  }

  int cluster = 0;
  std::vector<bool> visited(n, false);
  for (int i = 0; i < n; ++i) {
    if (visited[i] || !core[i]) continue;
    std::deque<int> queue = {i};
    visited[i] = true;
    labels[i] = cluster;
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      if (!core[p]) continue;
      for (int q : nbr[p]) {
        if (labels[q] < 0) labels[q] = cluster;
        if (!visited[q] && core[q]) {
          visited[q] = true;
          queue.push_back(q);
        }
      }
    }
    ++cluster;
  }
  return labels;
}

struct SegmentFeatureSelection {
  Embedding feature;
  int index = -1;          // index into the input list
  bool all_noise = false;  // fell back to the global centroid
};

/// Robust per-segment label: cluster the per-view features, take the
/// dominant cluster (ties -> lowest label) and return the input feature
/// nearest its centroid. If everything is noise, fall back to the
/// feature nearest the global centroid (flagged).
inline SegmentFeatureSelection select_segment_feature(
    const std::vector<Embedding>& features, double eps, int min_pts) {
  if (features.empty()) throw EmptyInput("no features to select from");
  const std::vector<int> labels = dbscan(features, eps, min_pts);
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);

  SegmentFeatureSelection out;
  Embedding centroid;
  if (n_clusters == 0) {
    out.all_noise = true;
    centroid = Embedding::Zero(features[0].size());
    for (const auto& f : features) centroid += f;
    centroid /= static_cast<double>(features.size());
  } else {
    std::vector<int> count(n_clusters, 0);
    for (int l : labels) {
      if (l >= 0) ++count[l];
    }
    int dominant = 0;
    for (int c = 1; c < n_clusters; ++c) {
      if (count[c] > count[dominant]) dominant = c;  // ties -> lowest label
    }
    centroid = Embedding::Zero(features[0].size());
    for (size_t i = 0; i < features.size(); ++i) {
      if (labels[i] == dominant) centroid += features[i];
    }
    centroid /= static_cast<double>(count[dominant]);
  }
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < features.size(); ++i) {
    const double d = (features[i] - centroid).norm();
    if (d < best) {
      best = d;
      out.index = static_cast<int>(i);
    }
  }
  out.feature = features[out.index];
  return out;
}

}  // namespace oslam
