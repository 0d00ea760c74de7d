#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "oslam/association.hpp"
#include "oslam/errors.hpp"
#include "oslam/pose.hpp"
#include "oslam/quadric.hpp"
#include "oslam/simulation.hpp"

namespace oslam {

/// Positional RMSE after closed-form rigid alignment of the estimated
/// trajectory onto the reference (Umeyama without scale).
inline double evaluate_ate(const std::vector<Pose>& estimated,
                           const std::vector<Pose>& reference) {
  if (estimated.size() != reference.size()) {
    throw LengthMismatch("trajectory lengths differ");
  }
  if (estimated.size() < 3) throw LengthMismatch("need >= 3 poses");
  std::vector<Vec3> est, ref;
  est.reserve(estimated.size());
  ref.reserve(reference.size());
  for (const auto& p : estimated) est.push_back(p.center());
  for (const auto& p : reference) ref.push_back(p.center());
  const Pose T = align_point_sets(est, ref);
  double ss = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    ss += (T.apply(est[i]) - ref[i]).squaredNorm();
  }
  return std::sqrt(ss / static_cast<double>(est.size()));
}

/// Volumetric IoU of two ellipsoids on a fixed 64^3 voxel grid over the
/// union bounding box.
inline double ellipsoid_iou_3d(const EllipsoidParams& a,
                               const EllipsoidParams& b, int grid = 64) {
  auto half_extent = [](const EllipsoidParams& e) {
    return Vec3(e.shape().diagonal().cwiseMax(0.0).cwiseSqrt());
  };
  const Vec3 ha = half_extent(a), hb = half_extent(b);
  const Vec3 lo = (a.center - ha).cwiseMin(b.center - hb);
  const Vec3 hi = (a.center + ha).cwiseMax(b.center + hb);
  const Vec3 step = (hi - lo) / grid;
  auto inside = [](const EllipsoidParams& e, const Vec3& p) {
    const Vec3 local = e.rotation.transpose() * (p - e.center);
    return (local.cwiseQuotient(e.semi_axes)).squaredNorm() <= 1.0;
  };
  long in_a = 0, in_b = 0, in_both = 0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      for (int k = 0; k < grid; ++k) {
        const Vec3 p = lo + Vec3((i + 0.5) * step.x(), (j + 0.5) * step.y(),
                                 (k + 0.5) * step.z());
        const bool ia = inside(a, p);
        const bool ib = inside(b, p);
        in_a += ia;
        in_b += ib;
        in_both += ia && ib;
      }
    }
  }
  const long uni = in_a + in_b - in_both;
  return uni > 0 ? static_cast<double>(in_both) / uni : 0.0;
}

struct ObjectMetrics {
  int gt_count = 0;
  int estimated_count = 0;
  int matched = 0;
  double mean_center_error = 0;
  double mean_axis_rel_error = 0;
  double mean_iou3d = 0;
};

/// Greedy center-distance matching (2 m gate by default), then per-match
/// center error, sorted-axis relative error, and voxel 3D IoU.
inline ObjectMetrics evaluate_objects(const TrackStore& store,
                                      const GroundTruth& gt,
                                      double gate = 2.0) {
  ObjectMetrics m;
  m.gt_count = static_cast<int>(gt.objects.size());
  std::vector<const ObjectTrack*> est;
  for (const auto& t : store.tracks) {
    if (t.landmark) est.push_back(&t);
  }
  m.estimated_count = static_cast<int>(est.size());

  struct Pair {
    double dist;
    int gi, ei;
  };
  std::vector<Pair> pairs;
  for (int g = 0; g < m.gt_count; ++g) {
    for (int e = 0; e < m.estimated_count; ++e) {
      const double d =
          (gt.objects[g].shape.center - est[e]->landmark->center).norm();
      if (d <= gate) pairs.push_back({d, g, e});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.gi != b.gi) return a.gi < b.gi;
    return a.ei < b.ei;
  });
  std::vector<bool> g_used(m.gt_count, false), e_used(m.estimated_count, false);
  double sum_center = 0, sum_axis = 0, sum_iou = 0;
  for (const auto& p : pairs) {
    if (g_used[p.gi] || e_used[p.ei]) continue;
    g_used[p.gi] = true;
    e_used[p.ei] = true;
    ++m.matched;
    const EllipsoidParams& truth = gt.objects[p.gi].shape;
    const EllipsoidParams& found = *est[p.ei]->landmark;
    sum_center += p.dist;
    Vec3 ga = truth.semi_axes, ea = found.semi_axes;
    std::sort(ga.data(), ga.data() + 3);
    std::sort(ea.data(), ea.data() + 3);
    sum_axis += ((ea - ga).cwiseQuotient(ga)).cwiseAbs().mean();
    sum_iou += ellipsoid_iou_3d(truth, found);
  }
  if (m.matched > 0) {
    m.mean_center_error = sum_center / m.matched;
    m.mean_axis_rel_error = sum_axis / m.matched;
    m.mean_iou3d = sum_iou / m.matched;
  }
  return m;
}

/// One labeled association decision: which track a detection landed in
/// and which ground-truth object produced it (false positives carry
/// unique negative ids).
struct AssociationRecord {
  int assigned_track = -1;
  long true_id = -1;
};

struct AssociationQuality {
  double precision = 1.0;
  double recall = 1.0;
  long same_track_pairs = 0;
  long same_gt_pairs = 0;
  long agreeing_pairs = 0;
};

/// Pairwise clustering precision/recall of the association against the
/// ground-truth instance ids.
inline AssociationQuality evaluate_association(
    const std::vector<AssociationRecord>& records) {
  AssociationQuality q;
  std::map<int, std::map<long, long>> per_track;  // track -> true_id -> count
  std::map<long, long> per_gt;                    // true_id -> count (real objects)
  for (const auto& r : records) {
    if (r.assigned_track >= 0) per_track[r.assigned_track][r.true_id] += 1;
    if (r.true_id >= 0) per_gt[r.true_id] += 1;
  }
  for (const auto& [track, counts] : per_track) {
    long total = 0;
    for (const auto& [id, c] : counts) total += c;
    q.same_track_pairs += total * (total - 1) / 2;
    for (const auto& [id, c] : counts) {
      if (id >= 0) q.agreeing_pairs += c * (c - 1) / 2;
    }
  }
  long recall_hits = 0;
  for (const auto& [id, c] : per_gt) q.same_gt_pairs += c * (c - 1) / 2;
  // recall numerator: same-gt pairs that share a track
  std::map<long, std::map<int, long>> per_gt_track;
  for (const auto& r : records) {
    if (r.true_id >= 0 && r.assigned_track >= 0) {
      per_gt_track[r.true_id][r.assigned_track] += 1;
    }
  }
  for (const auto& [id, tracks] : per_gt_track) {
    for (const auto& [track, c] : tracks) recall_hits += c * (c - 1) / 2;
  }
  if (q.same_track_pairs > 0) {
    q.precision =
        static_cast<double>(q.agreeing_pairs) / q.same_track_pairs;
  }
  if (q.same_gt_pairs > 0) {
    q.recall = static_cast<double>(recall_hits) / q.same_gt_pairs;
  }
  return q;
}

}  // namespace oslam
