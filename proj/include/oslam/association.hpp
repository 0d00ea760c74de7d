#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oslam/errors.hpp"
#include "oslam/metrics.hpp"
#include "oslam/quadric.hpp"
#include "oslam/semantic.hpp"

namespace oslam {

/// One 2D instance detection in a camera at a keyframe. track_hint is the
/// front-end tracker's (possibly corrupted) instance id; -1 means none.
struct Detection {
  int camera_id = 0;
  int frame_id = 0;
  GaussianEllipse ellipse;
  long track_hint = -1;
  std::string class_label;
  Embedding embedding;
  std::vector<long> point_ids;  // map points inside this instance mask
};

/// Unified object hypothesis with its spatiotemporal observation memory
/// (the trajectory index table), running semantic embedding, and the
/// current ellipsoid landmark once estimated.
struct ObjectTrack {
  int object_id = -1;
  std::string class_label;
  std::map<std::pair<int, int>, Detection> memory;  // (camera, frame) -> obs
  std::optional<EllipsoidParams> landmark;
  Embedding embedding;
  int embedding_count = 0;
  std::map<long, int> hint_last_frame;  // hint value -> latest frame seen
  std::optional<Embedding> selected_feature;
  std::set<long> associated_point_ids;
  int observations_since_optimize = 0;
  int total_observations = 0;

  int latest_frame() const {
    int latest = -1;
    for (const auto& [key, det] : memory) latest = std::max(latest, key.second);
    return latest;
  }
};

struct AssociationConfig {
  double wasserstein_scale = 0.1;  // C in the exp(-sqrt(W2)/C) factor
  double score_threshold = 0.05;
  double semantic_gate = 0.6;  // min embedding cosine
  int memory_horizon = 100;    // frames
  double min_spawn_area = 1e-6;
};

/// Spatially-weighted matching score: overlap times shape agreement,
/// IoU * exp(-sqrt(W2^2)/C). In [0, 1]; 0 whenever the ellipses do not
/// overlap at all.
inline double w_score(const GaussianEllipse& est, const GaussianEllipse& obs,
                      const AssociationConfig& cfg) {
  const double iou = ellipse_iou(est, obs);
  if (iou <= 0.0) return 0.0;
  return iou *
         std::exp(-std::sqrt(wasserstein2_sq(est, obs)) / cfg.wasserstein_scale);
}

/// Append a detection to a track's memory: unique (camera, frame) key,
/// running-mean embedding, horizon eviction.
inline void update_memory(ObjectTrack& track, const Detection& det,
                          const AssociationConfig& cfg = {}) {
  const auto key = std::make_pair(det.camera_id, det.frame_id);
  if (track.memory.count(key)) {
    throw DuplicateKey("duplicate (camera, frame) assignment to track");
  }
  track.memory[key] = det;
  if (track.embedding_count == 0) {
    track.embedding = det.embedding;
  } else {
    track.embedding = normalize_embedding(
        track.embedding * static_cast<double>(track.embedding_count) +
        det.embedding);
  }
  ++track.embedding_count;
  if (det.track_hint >= 0) {
    auto& last = track.hint_last_frame[det.track_hint];
    last = std::max(last, det.frame_id);
  }
  for (long pid : det.point_ids) track.associated_point_ids.insert(pid);
  ++track.observations_since_optimize;
  ++track.total_observations;

  const int latest = track.latest_frame();
  for (auto it = track.memory.begin(); it != track.memory.end();) {
    if (latest - it->first.second > cfg.memory_horizon) {
      it = track.memory.erase(it);
    } else {
      ++it;
    }
  }
}

/// Mutable track set; object ids are indices and stable for life.
struct TrackStore {
  std::vector<ObjectTrack> tracks;

  ObjectTrack& spawn(const Detection& det) {
    ObjectTrack t;
    t.object_id = static_cast<int>(tracks.size());
    t.class_label = det.class_label;
    tracks.push_back(std::move(t));
    return tracks.back();
  }
};

namespace detail {

// Landmark projections are shared across the detections of one frame;
// (track, camera) pairs are cached for the duration of a unify call.
struct ProjectionCache {
  std::map<std::pair<int, int>, std::optional<GaussianEllipse>> entries;

  const std::optional<GaussianEllipse>& get(const ObjectTrack& track,
                                            int camera_id,
                                            const std::vector<Pose>& poses) {
    const auto key = std::make_pair(track.object_id, camera_id);
    auto it = entries.find(key);
    if (it != entries.end()) return it->second;
    std::optional<GaussianEllipse> proj;
    try {
      proj = conic_to_gaussian(project_quadric(
          DualQuadric::from_ellipsoid(*track.landmark), poses.at(camera_id)));
    } catch (const Error&) {
    }
    return entries.emplace(key, std::move(proj)).first->second;
  }
};

// Geometric verification score of a detection against a track's
// projected landmark; tracks without a landmark yet are unverifiable
// (nullopt) and handled by the semantic tiers.
inline std::optional<double> verify_score(const ObjectTrack& track,
                                          const Detection& det,
                                          const std::vector<Pose>& camera_poses,
                                          const AssociationConfig& cfg,
                                          ProjectionCache& cache) {
  if (!track.landmark) return std::nullopt;
  const auto& proj = cache.get(track, det.camera_id, camera_poses);
  if (!proj) return 0.0;  // behind camera: geometrically impossible
  return w_score(*proj, det.ellipse, cfg);
}

struct CandidatePair {
  double score;
  int track_id;
  int det_index;
  bool operator<(const CandidatePair& o) const {
    if (score != o.score) return score > o.score;  // descending
    if (track_id != o.track_id) return track_id < o.track_id;
    return det_index < o.det_index;
  }
};

}  // namespace detail

/// Three-stage association of one frame's detections (all cameras)
/// against the track store:
///   1. memory first: tracks whose trajectory table contains the
///      detection's track hint within the horizon,
///   2. semantic gate: class equality + embedding cosine,
///   3. geometric verification: w_score of the projected landmark
///      against the detection, at or above the score threshold.
/// Memory proposals with a landmark are still vetoed geometrically;
/// young tracks without a landmark are accepted on hint + class +
/// embedding alone (ranked below every verified match). Greedy
/// mutual-exclusive assignment by descending score; unmatched detections
/// spawn tracks, grouped by (hint, class) across cameras so a new object
/// first seen by several cameras gets one id. Returns the object id per
/// detection (-1 for rejected slivers). Does not touch the memories;
/// call update_memory with the returned assignment.
inline std::vector<int> unify_tracks(TrackStore& store,
                                     const std::vector<Detection>& detections,
                                     int frame_id,
                                     const std::vector<Pose>& camera_poses,
                                     const AssociationConfig& cfg = {}) {
  const int nd = static_cast<int>(detections.size());
  std::vector<int> assignment(nd, -1);
  detail::ProjectionCache cache;
  std::set<std::pair<int, int>> used_slots;  // (track, camera)
  std::vector<bool> det_done(nd, false);

  auto try_assign = [&](const std::vector<detail::CandidatePair>& pairs) {
    std::vector<detail::CandidatePair> sorted = pairs;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& p : sorted) {
      if (det_done[p.det_index]) continue;
      const auto slot =
          std::make_pair(p.track_id, detections[p.det_index].camera_id);
      if (used_slots.count(slot)) continue;
      used_slots.insert(slot);
      det_done[p.det_index] = true;
      assignment[p.det_index] = p.track_id;
    }
  };

  // stage 1: memory-first proposals, geometrically vetoed
  std::vector<detail::CandidatePair> verified;
  std::vector<detail::CandidatePair> unverifiable;
  for (int d = 0; d < nd; ++d) {
    const Detection& det = detections[d];
    if (det.track_hint < 0) continue;
    for (const auto& track : store.tracks) {
      const auto it = track.hint_last_frame.find(det.track_hint);
      if (it == track.hint_last_frame.end()) continue;
      if (frame_id - it->second > cfg.memory_horizon) continue;
      const auto score = detail::verify_score(track, det, camera_poses, cfg, cache);
      if (score.has_value()) {
        if (*score >= cfg.score_threshold) {
          verified.push_back({*score, track.object_id, d});
        }
      } else if (track.class_label == det.class_label) {
        unverifiable.push_back(
            {cosine(track.embedding, det.embedding), track.object_id, d});
      }
    }
  }
  try_assign(verified);
  try_assign(unverifiable);

  // stages 2+3: semantic gate then geometric verification over all
  // tracks; tracks without a landmark cannot be verified here and are
  // left to the hint tier
  std::vector<detail::CandidatePair> gated;
  for (int d = 0; d < nd; ++d) {
    if (det_done[d]) continue;
    const Detection& det = detections[d];
    for (const auto& track : store.tracks) {
      if (track.class_label != det.class_label) continue;
      if (cosine(track.embedding, det.embedding) < cfg.semantic_gate) continue;
      const auto score = detail::verify_score(track, det, camera_poses, cfg, cache);
      if (!score.has_value() || *score < cfg.score_threshold) continue;
      gated.push_back({*score, track.object_id, d});
    }
  }
  try_assign(gated);

  // spawn new tracks, cross-view unified by (hint, class) within the frame
  std::map<std::pair<long, std::string>, int> spawn_groups;
  for (int d = 0; d < nd; ++d) {
    if (det_done[d]) continue;
    const Detection& det = detections[d];
    if (det.ellipse.area() < cfg.min_spawn_area) continue;
    int track_id = -1;
    if (det.track_hint >= 0) {
      const auto key = std::make_pair(det.track_hint, det.class_label);
      const auto it = spawn_groups.find(key);
      if (it != spawn_groups.end() &&
          !used_slots.count({it->second, det.camera_id})) {
        track_id = it->second;
      } else if (it == spawn_groups.end()) {
        track_id = store.spawn(det).object_id;
        spawn_groups[key] = track_id;
      }
    }
    if (track_id < 0) track_id = store.spawn(det).object_id;
    used_slots.insert({track_id, det.camera_id});
    assignment[d] = track_id;
    det_done[d] = true;
  }
  return assignment;
}

}  // namespace oslam
