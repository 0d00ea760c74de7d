#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "oslam/association.hpp"
#include "oslam/errors.hpp"
#include "oslam/estimation.hpp"
#include "oslam/pose.hpp"
#include "oslam/pose_graph.hpp"
#include "oslam/rng.hpp"
#include "oslam/semantic.hpp"

namespace oslam {

/// Hierarchical keyframe descriptor [f_view; f_seg]: image-level mean of
/// all camera features plus an inverse-distance weighted segment part.
struct SceneDescriptor {
  Embedding f_view;
  Embedding f_seg;
  bool has_segments = false;
};

struct LoopConfig {
  double alpha = 0.4;  // image-level similarity weight
  double beta = 0.6;   // segment-level similarity weight
  int min_covisible_points = 30;
  int ransac_iters = 200;
  double inlier_dist = 0.5;  // meters
  int min_inliers = 6;
  int min_temporal_gap = 50;  // keyframes
  double fallback_threshold = 0.85;
  double merge_dist = 1.5;  // meters
  double merge_cos = 0.8;
  double loop_edge_weight = 100.0;
  std::uint64_t ransac_seed = 1;
};

struct Keyframe {
  int frame_id = -1;
  Pose rig_pose;                     // world-to-body
  std::vector<Pose> camera_poses;    // world-to-camera per rig camera
  std::vector<Embedding> camera_features;
  std::vector<int> seen_tracks;      // object ids observed at this keyframe
  std::vector<long> visible_points;  // sorted front-end point track ids
  SceneDescriptor descriptor;
};

/// Shared-map-point count between two keyframes (symmetric).
inline int covisibility(const Keyframe& a, const Keyframe& b) {
  int shared = 0;
  auto ia = a.visible_points.begin();
  auto ib = b.visible_points.begin();
  while (ia != a.visible_points.end() && ib != b.visible_points.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++shared;
      ++ia;
      ++ib;
    }
  }
  return shared;
}

namespace detail {

// Accumulate vectors in lexicographic order so the sum is bit-identical
// under any permutation of the inputs.
inline Embedding ordered_sum(std::vector<Embedding> items) {
  std::sort(items.begin(), items.end(), [](const Embedding& a, const Embedding& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                        b.data() + b.size());
  });
  Embedding sum = Embedding::Zero(items.front().size());
  for (const auto& v : items) sum += v;
  return sum;
}

}  // namespace detail

/// f_view = normalized mean of the per-camera features; f_seg =
/// normalized inverse-distance weighted sum of segment features. Both
/// accumulations are order-independent bit-for-bit. An empty segment
/// list yields a flagged zero f_seg; similarity then falls back to the
/// view term alone.
inline SceneDescriptor build_scene_descriptor(
    const std::vector<Embedding>& per_camera_features,
    const std::vector<std::pair<Embedding, double>>& segments) {
  if (per_camera_features.empty()) {
    throw EmptyInput("descriptor needs at least one camera feature");
  }
  SceneDescriptor d;
  d.f_view = normalize_embedding(
      Embedding(detail::ordered_sum(per_camera_features) /
                static_cast<double>(per_camera_features.size())));
  if (segments.empty()) {
    d.f_seg = Embedding::Zero(d.f_view.size());
    d.has_segments = false;
    return d;
  }
  double inv_sum = 0;
  for (const auto& [emb, dist] : segments) {
    if (dist <= 0) throw DegenerateInput("segment distance must be positive");
    inv_sum += 1.0 / dist;
  }
  std::vector<Embedding> weighted;
  weighted.reserve(segments.size());
  for (const auto& [emb, dist] : segments) {
    weighted.push_back(Embedding((1.0 / dist) / inv_sum * emb));
  }
  d.f_seg = normalize_embedding(detail::ordered_sum(std::move(weighted)));
  d.has_segments = true;
  return d;
}

/// alpha * cos(f_view) + beta * cos(f_seg); when either side lacks
/// segments the view term carries the full weight.
inline double similarity(const SceneDescriptor& a, const SceneDescriptor& b,
                         const LoopConfig& cfg) {
  const double cv = cosine(a.f_view, b.f_view);
  if (!a.has_segments || !b.has_segments) return cv;
  return cfg.alpha * cv + cfg.beta * cosine(a.f_seg, b.f_seg);
}

struct AdaptiveThreshold {
  double value = 0;
  bool used_fallback = false;
};

/// Lowest similarity among keyframes covisible with the query (co-views
/// at or above min_covisible_points); with no covisible frame, a fixed
/// fallback is used and flagged.
inline AdaptiveThreshold adaptive_threshold(
    const Keyframe& query, const std::vector<Keyframe>& keyframes,
    const LoopConfig& cfg) {
  AdaptiveThreshold out;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& kf : keyframes) {
    if (kf.frame_id == query.frame_id) continue;
    if (covisibility(query, kf) < cfg.min_covisible_points) continue;
    lowest = std::min(lowest, similarity(query.descriptor, kf.descriptor, cfg));
  }
  if (!std::isfinite(lowest)) {
    out.value = cfg.fallback_threshold;
    out.used_fallback = true;
  } else {
    out.value = lowest;
  }
  return out;
}

struct LoopCandidate {
  int keyframe_index = -1;
  double similarity = 0;
};

/// Candidates: non-covisible keyframes at least min_temporal_gap older
/// than the query whose similarity reaches the adaptive threshold,
/// best first.
inline std::vector<LoopCandidate> loop_candidates(
    const Keyframe& query, const std::vector<Keyframe>& keyframes,
    const LoopConfig& cfg) {
  const AdaptiveThreshold thr = adaptive_threshold(query, keyframes, cfg);
  std::vector<LoopCandidate> out;
  for (size_t k = 0; k < keyframes.size(); ++k) {
    const Keyframe& kf = keyframes[k];
    if (query.frame_id - kf.frame_id < cfg.min_temporal_gap) continue;
    if (covisibility(query, kf) >= cfg.min_covisible_points) continue;
    const double s = similarity(query.descriptor, kf.descriptor, cfg);
    if (s >= thr.value) out.push_back({static_cast<int>(k), s});
  }
  std::sort(out.begin(), out.end(), [](const LoopCandidate& a, const LoopCandidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.keyframe_index < b.keyframe_index;
  });
  return out;
}

struct VerifyResult {
  bool accepted = false;
  Pose relative;  // maps candidate-frame coordinates to query-frame ones
  int inliers = 0;
};

/// RANSAC over 3-point minimal samples with closed-form rigid alignment;
/// accepts when the inlier count reaches min_inliers and refits on all
/// inliers. Correspondences pair the same landmark's position in the
/// query and candidate body frames.
inline VerifyResult geometric_verify(const std::vector<Vec3>& query_local,
                                     const std::vector<Vec3>& candidate_local,
                                     const LoopConfig& cfg) {
  if (query_local.size() != candidate_local.size()) {
    throw LengthMismatch("correspondence lists differ in size");
  }
  const int n = static_cast<int>(query_local.size());
  if (n < 3) {
    throw InsufficientCorrespondences("need >= 3 shared landmarks");
  }
  Rng rng(cfg.ransac_seed);
  VerifyResult best;
  for (int it = 0; it < cfg.ransac_iters; ++it) {
    int a = static_cast<int>(rng.index(n));
    int b = static_cast<int>(rng.index(n));
    int c = static_cast<int>(rng.index(n));
    if (a == b || b == c || a == c) continue;
    const std::vector<Vec3> ps = {candidate_local[a], candidate_local[b],
                                  candidate_local[c]};
    const std::vector<Vec3> qs = {query_local[a], query_local[b],
                                  query_local[c]};
    // skip numerically collinear samples
    const Vec3 v1 = ps[1] - ps[0], v2 = ps[2] - ps[0];
    if (v1.cross(v2).norm() < 1e-9 * v1.norm() * v2.norm()) continue;
    Pose T;
    try {
      T = align_point_sets(ps, qs);
    } catch (const Error&) {
      continue;
    }
    int inliers = 0;
    for (int k = 0; k < n; ++k) {
      if ((T.apply(candidate_local[k]) - query_local[k]).norm() <
          cfg.inlier_dist) {
        ++inliers;
      }
    }
    if (inliers > best.inliers) {
      best.inliers = inliers;
      best.relative = T;
    }
  }
  if (best.inliers < cfg.min_inliers) {
    best.accepted = false;
    return best;
  }
  // refit on all inliers of the best model
  std::vector<Vec3> ps, qs;
  for (int k = 0; k < n; ++k) {
    if ((best.relative.apply(candidate_local[k]) - query_local[k]).norm() <
        cfg.inlier_dist) {
      ps.push_back(candidate_local[k]);
      qs.push_back(query_local[k]);
    }
  }
  best.relative = align_point_sets(ps, qs);
  best.inliers = static_cast<int>(ps.size());
  best.accepted = true;
  return best;
}

struct LoopConstraint {
  int query_index = -1;      // into the keyframe list
  int candidate_index = -1;  // into the keyframe list
  Pose relative;             // candidate-frame -> query-frame coordinates
};

struct CorrectLoopResult {
  PoseGraphResult graph;
  std::vector<std::pair<int, int>> merges;  // (kept id, absorbed id)
  int reoptimized_objects = 0;
};

/// Builds the observation set of a track under the CURRENT keyframe pose
/// estimates (the pipeline owns points and camera extrinsics).
using ObservationSetBuilder = std::function<ObservationSet(const ObjectTrack&)>;

/// Object-level loop correction: (1) add the loop edge and re-optimize
/// the pose graph; (2) re-estimate every mature object quadric against
/// the corrected poses; (3) merge redundant instances by spatial
/// proximity + embedding agreement (kept track = lower id, memories
/// unioned, merged track re-optimized once).
inline CorrectLoopResult correct_loop(PoseGraph& graph,
                                      std::vector<Keyframe>& keyframes,
                                      TrackStore& store,
                                      const LoopConstraint& loop,
                                      const ObservationSetBuilder& build_obs,
                                      const EstimatorConfig& est_cfg,
                                      const LoopConfig& cfg) {
  CorrectLoopResult out;
  PoseGraphEdge edge;
  edge.i = loop.candidate_index;
  edge.j = loop.query_index;
  edge.t_ij = loop.relative.inverse();  // pose of query body in candidate frame
  edge.weight = cfg.loop_edge_weight;
  edge.is_loop = true;
  graph.edges.push_back(edge);

  out.graph = optimize_pose_graph(graph);
  if (out.graph.diverged) {
    graph.edges.pop_back();
    return out;
  }
  // write the optimized body poses back into the keyframes; each camera
  // pose is extrinsic ∘ world-to-body, so it moves by the same update
  for (size_t k = 0; k < keyframes.size(); ++k) {
    const Pose new_rig = graph.nodes[k].inverse();
    const Pose adjust = keyframes[k].rig_pose.inverse().compose(new_rig);
    for (auto& cam : keyframes[k].camera_poses) {
      cam = cam.compose(adjust);
    }
    keyframes[k].rig_pose = new_rig;
  }

  auto reoptimize = [&](ObjectTrack& track) {
    if (track.total_observations < est_cfg.min_observations) return;
    const ObservationSet set = build_obs(track);
    try {
      const EllipsoidParams init =
          track.landmark ? *track.landmark : init_quadric(set, est_cfg);
      track.landmark = optimize_quadric(init, set, est_cfg).params;
      ++out.reoptimized_objects;
    } catch (const Error&) {
      // keep the previous landmark when the solve is not possible
    }
  };
  for (auto& track : store.tracks) reoptimize(track);

  // merge duplicated instances until settled
  bool merged_any = true;
  while (merged_any) {
    merged_any = false;
    for (size_t i = 0; i < store.tracks.size() && !merged_any; ++i) {
      ObjectTrack& a = store.tracks[i];
      if (!a.landmark) continue;
      for (size_t j = i + 1; j < store.tracks.size(); ++j) {
        ObjectTrack& b = store.tracks[j];
        if (!b.landmark) continue;
        if ((a.landmark->center - b.landmark->center).norm() >= cfg.merge_dist)
          continue;
        if (cosine(a.embedding, b.embedding) < cfg.merge_cos) continue;
        // fold b into a (lower object id wins)
        for (const auto& [key, det] : b.memory) {
          if (!a.memory.count(key)) a.memory[key] = det;
        }
        a.embedding = normalize_embedding(
            Embedding(a.embedding * a.embedding_count +
                      b.embedding * b.embedding_count));
        a.embedding_count += b.embedding_count;
        for (const auto& [hint, frame] : b.hint_last_frame) {
          auto& last = a.hint_last_frame[hint];
          last = std::max(last, frame);
        }
        a.associated_point_ids.insert(b.associated_point_ids.begin(),
                                      b.associated_point_ids.end());
        a.total_observations += b.total_observations;
        b.memory.clear();
        b.landmark.reset();
        b.total_observations = 0;
        b.hint_last_frame.clear();
        out.merges.emplace_back(a.object_id, b.object_id);
        reoptimize(a);
        merged_any = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace oslam
