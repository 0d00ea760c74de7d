#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oslam/association.hpp"
#include "oslam/errors.hpp"
#include "oslam/estimation.hpp"
#include "oslam/evaluation.hpp"
#include "oslam/format.hpp"
#include "oslam/loop_closure.hpp"
#include "oslam/pose_graph.hpp"
#include "oslam/scene_graph.hpp"
#include "oslam/semantic.hpp"
#include "oslam/simulation.hpp"

namespace oslam {

struct PipelineConfig {
  SimConfig sim;
  AssociationConfig association;
  EstimatorConfig estimator;
  LoopConfig loop;
  bool loop_closure_enabled = true;
  int reoptimize_every = 5;   // quadric re-solve cadence, new observations
  int max_solve_observations = 16;  // stride-subsampled cap per solve
  double dbscan_eps = 0.2;
  int dbscan_min_pts = 3;
  double gt_match_gate = 2.0;  // meters, object matching for metrics
  double loop_gt_dist = 5.0;   // meters, revisit radius for loop recall
  double landmark_axis_min = 0.02;  // sanity bounds on solved semi-axes
  double landmark_axis_max = 20.0;
};

namespace detail {

inline void read_double(const nlohmann::json& j, const char* key, double& out) {
  if (j.contains(key)) out = j.at(key).get<double>();
}
inline void read_int(const nlohmann::json& j, const char* key, int& out) {
  if (j.contains(key)) out = j.at(key).get<int>();
}
inline void read_bool(const nlohmann::json& j, const char* key, bool& out) {
  if (j.contains(key)) out = j.at(key).get<bool>();
}
inline void read_u64(const nlohmann::json& j, const char* key,
                     std::uint64_t& out) {
  if (j.contains(key)) out = j.at(key).get<std::uint64_t>();
}

}  // namespace detail

/// Structured text config: a JSON document with optional sections
/// "sim", "association", "estimator", "loop", "pipeline"; every missing
/// field keeps its default.
inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  PipelineConfig cfg;
  try {
    if (j.contains("seed")) cfg.sim.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("sim")) {
      const auto& s = j.at("sim");
      detail::read_u64(s, "seed", cfg.sim.seed);
      detail::read_int(s, "n_cameras", cfg.sim.n_cameras);
      detail::read_double(s, "fx", cfg.sim.fx);
      detail::read_double(s, "fy", cfg.sim.fy);
      detail::read_double(s, "cx", cfg.sim.cx);
      detail::read_double(s, "cy", cfg.sim.cy);
      detail::read_double(s, "xi", cfg.sim.xi);
      detail::read_double(s, "fov_deg", cfg.sim.fov_deg);
      detail::read_double(s, "max_range", cfg.sim.max_range);
      detail::read_double(s, "rig_height", cfg.sim.rig_height);
      if (s.contains("waypoints")) {
        cfg.sim.waypoints.clear();
        for (const auto& w : s.at("waypoints")) {
          cfg.sim.waypoints.emplace_back(w.at(0).get<double>(),
                                         w.at(1).get<double>());
        }
      }
      detail::read_int(s, "n_keyframes", cfg.sim.n_keyframes);
      detail::read_bool(s, "reverse_revisit", cfg.sim.reverse_revisit);
      detail::read_int(s, "n_objects", cfg.sim.n_objects);
      detail::read_int(s, "n_classes", cfg.sim.n_classes);
      detail::read_double(s, "axis_min", cfg.sim.axis_min);
      detail::read_double(s, "axis_max", cfg.sim.axis_max);
      detail::read_double(s, "lateral_min", cfg.sim.lateral_min);
      detail::read_double(s, "lateral_max", cfg.sim.lateral_max);
      detail::read_int(s, "points_per_object", cfg.sim.points_per_object);
      detail::read_double(s, "road_point_spacing", cfg.sim.road_point_spacing);
      detail::read_double(s, "point_range", cfg.sim.point_range);
      detail::read_double(s, "sigma_point", cfg.sim.sigma_point);
      detail::read_double(s, "sigma_mu", cfg.sim.sigma_mu);
      detail::read_double(s, "sigma_sigma", cfg.sim.sigma_sigma);
      detail::read_double(s, "p_drop", cfg.sim.p_drop);
      detail::read_double(s, "false_positive_rate",
                          cfg.sim.false_positive_rate);
      detail::read_double(s, "p_corrupt", cfg.sim.p_corrupt);
      detail::read_double(s, "odom_drift_per_m", cfg.sim.odom_drift_per_m);
      detail::read_double(s, "odom_jitter", cfg.sim.odom_jitter);
      detail::read_int(s, "embedding_dim", cfg.sim.embedding_dim);
      detail::read_double(s, "sigma_embedding", cfg.sim.sigma_embedding);
    }
    if (j.contains("association")) {
      const auto& a = j.at("association");
      detail::read_double(a, "wasserstein_scale",
                          cfg.association.wasserstein_scale);
      detail::read_double(a, "score_threshold",
                          cfg.association.score_threshold);
      detail::read_double(a, "semantic_gate", cfg.association.semantic_gate);
      detail::read_int(a, "memory_horizon", cfg.association.memory_horizon);
      detail::read_double(a, "min_spawn_area", cfg.association.min_spawn_area);
    }
    if (j.contains("estimator")) {
      const auto& e = j.at("estimator");
      detail::read_double(e, "w_center", cfg.estimator.w_center);
      detail::read_int(e, "max_iterations", cfg.estimator.max_iterations);
      detail::read_double(e, "convergence_tol", cfg.estimator.convergence_tol);
      detail::read_double(e, "robust_loss_scale",
                          cfg.estimator.robust_loss_scale);
      detail::read_int(e, "min_observations", cfg.estimator.min_observations);
    }
    if (j.contains("loop")) {
      const auto& l = j.at("loop");
      detail::read_double(l, "alpha", cfg.loop.alpha);
      detail::read_double(l, "beta", cfg.loop.beta);
      detail::read_int(l, "min_covisible_points",
                       cfg.loop.min_covisible_points);
      detail::read_int(l, "ransac_iters", cfg.loop.ransac_iters);
      detail::read_double(l, "inlier_dist", cfg.loop.inlier_dist);
      detail::read_int(l, "min_inliers", cfg.loop.min_inliers);
      detail::read_int(l, "min_temporal_gap", cfg.loop.min_temporal_gap);
      detail::read_double(l, "fallback_threshold",
                          cfg.loop.fallback_threshold);
      detail::read_double(l, "merge_dist", cfg.loop.merge_dist);
      detail::read_double(l, "merge_cos", cfg.loop.merge_cos);
      detail::read_double(l, "loop_edge_weight", cfg.loop.loop_edge_weight);
      detail::read_u64(l, "ransac_seed", cfg.loop.ransac_seed);
      detail::read_bool(l, "enabled", cfg.loop_closure_enabled);
    }
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      detail::read_bool(p, "loop_closure", cfg.loop_closure_enabled);
      detail::read_int(p, "reoptimize_every", cfg.reoptimize_every);
      detail::read_int(p, "max_solve_observations",
                       cfg.max_solve_observations);
      detail::read_double(p, "dbscan_eps", cfg.dbscan_eps);
      detail::read_int(p, "dbscan_min_pts", cfg.dbscan_min_pts);
      detail::read_double(p, "gt_match_gate", cfg.gt_match_gate);
      detail::read_double(p, "loop_gt_dist", cfg.loop_gt_dist);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config field: ") + e.what());
  }
  if (cfg.loop.alpha < 0 || cfg.loop.beta < 0 ||
      std::abs(cfg.loop.alpha + cfg.loop.beta - 1.0) > 1e-9) {
    throw ConfigError("loop.alpha and loop.beta must be nonnegative, sum 1");
  }
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_pipeline_config(j);
}

struct LoopEvent {
  int query = -1;
  int candidate = -1;
  double similarity = 0;
  bool verified = false;
  bool correct = false;  // against ground truth
  Pose relative;
  int merges = 0;
};

struct RunReport {
  double ate_pre = 0;
  double ate_post = 0;
  ObjectMetrics objects;
  AssociationQuality association;
  double loop_precision = 1.0;
  double loop_recall = 1.0;
  int loops_verified = 0;
  int duplicate_pairs = 0;  // landmark pairs shadowing one GT object
  // wall clock per stage, seconds (reported separately from the
  // deterministic metrics)
  double t_simulate = 0, t_associate = 0, t_estimate = 0, t_loop = 0,
         t_scene_graph = 0, t_evaluate = 0;
};

struct PipelineArtifacts {
  RunReport report;
  GroundTruth gt;
  SceneGraph graph;
  TrackStore tracks;
  std::vector<Keyframe> keyframes;
  PoseGraph pose_graph;
  std::vector<Pose> traj_pre, traj_post, traj_gt;  // world-to-body
  std::vector<LoopEvent> loops;
};

namespace detail {

struct PointRecord {
  int ref_keyframe = -1;
  Vec3 body_local = Vec3::Zero();
  long world_id = -1;
  int parent_track = -1;
};

class StageTimer {
 public:
  explicit StageTimer(double& sink) : sink_(sink), start_(clock::now()) {}
  ~StageTimer() {
    sink_ += std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  double& sink_;
  clock::time_point start_;
};

}  // namespace detail

/// End-to-end run: simulate -> associate -> estimate -> describe ->
/// loop-close -> scene graph, with evaluation against the simulator's
/// ground truth.
inline PipelineArtifacts run_pipeline(const PipelineConfig& cfg) {
  PipelineArtifacts art;
  RunReport& report = art.report;
  {
    detail::StageTimer t(report.t_simulate);
    art.gt = generate_world(cfg.sim);
  }
  const GroundTruth& gt = art.gt;
  const int n_frames = cfg.sim.n_keyframes;
  const int n_cams = gt.rig.size();

  TrackStore& store = art.tracks;
  std::vector<Keyframe>& kfs = art.keyframes;
  PoseGraph& graph = art.pose_graph;
  std::map<long, detail::PointRecord> point_records;  // by front-end track id
  std::vector<std::map<long, Vec3>> kf_point_locals;  // world_id -> body local
  std::vector<AssociationRecord> assoc_records;
  long fp_counter = 0;

  // current point-record world position under the latest pose estimates
  auto point_world = [&](const detail::PointRecord& rec) {
    return kfs[rec.ref_keyframe].rig_pose.inverse().apply(rec.body_local);
  };

  auto build_obs = [&](const ObjectTrack& track) {
    std::vector<Observation> obs;
    const int stride = std::max<int>(
        1, static_cast<int>(track.memory.size()) / cfg.max_solve_observations);
    int index = 0;
    for (const auto& [key, det] : track.memory) {
      if (index++ % stride != 0) continue;
      Observation o;
      o.camera_id = key.first;
      o.frame_id = key.second;
      o.ellipse = det.ellipse;
      o.pose = kfs[key.second].camera_poses[key.first];
      obs.push_back(std::move(o));
    }
    std::vector<Vec3> points;
    for (long pid : track.associated_point_ids) {
      const auto it = point_records.find(pid);
      if (it != point_records.end()) points.push_back(point_world(it->second));
    }
    return ObservationSet::make(std::move(obs), std::move(points));
  };

  auto refresh_descriptor = [&](Keyframe& kf) {
    std::vector<std::pair<Embedding, double>> segments;
    const Vec3 body_pos = kf.rig_pose.center();
    for (int tid : kf.seen_tracks) {
      const ObjectTrack& t = store.tracks[tid];
      if (!t.landmark) continue;
      const double d = std::max((t.landmark->center - body_pos).norm(), 0.1);
      segments.emplace_back(t.embedding, d);
    }
    kf.descriptor = build_scene_descriptor(kf.camera_features, segments);
  };

  auto solve_track = [&](ObjectTrack& track) {
    if (track.total_observations < cfg.estimator.min_observations) return;
    const ObservationSet set = build_obs(track);
    try {
      const EllipsoidParams init =
          track.landmark ? *track.landmark : init_quadric(set, cfg.estimator);
      const EllipsoidParams solved =
          optimize_quadric(init, set, cfg.estimator).params;
      // under-constrained views can run the axes off to absurd scales;
      // such solves carry no usable landmark
      if (solved.semi_axes.maxCoeff() <= cfg.landmark_axis_max &&
          solved.semi_axes.minCoeff() >= cfg.landmark_axis_min) {
        track.landmark = solved;
      }
      track.observations_since_optimize = 0;
    } catch (const Error&) {
      // leave the previous landmark; a later, richer set may succeed
    }
  };

  Pose raw_integrated;  // odometry-only, world-to-body
  for (int f = 0; f < n_frames; ++f) {
    FrameData frame;
    {
      detail::StageTimer t(report.t_simulate);
      frame = simulate_frame(gt, cfg.sim, f);
    }

    // pose bookkeeping: raw odometry for the pre-correction trajectory,
    // increments on top of possibly corrected keyframes for the estimate
    Pose est_pose;
    if (f == 0) {
      raw_integrated = gt.rig_poses[0];
      est_pose = gt.rig_poses[0];
    } else {
      raw_integrated = frame.odom_increment.compose(raw_integrated);
      est_pose = frame.odom_increment.compose(kfs[f - 1].rig_pose);
    }
    art.traj_pre.push_back(raw_integrated);

    Keyframe kf;
    kf.frame_id = f;
    kf.rig_pose = est_pose;
    for (int c = 0; c < n_cams; ++c) {
      kf.camera_poses.push_back(gt.rig.cameras[c].extrinsic.compose(est_pose));
    }
    kf.camera_features = frame.camera_features;

    // map point bookkeeping
    kf_point_locals.emplace_back();
    std::set<long> seen_points;
    for (const auto& obs : frame.point_observations) {
      seen_points.insert(obs.track_id);
      kf_point_locals[f].emplace(obs.world_id, obs.body_local);
      if (!point_records.count(obs.track_id)) {
        point_records[obs.track_id] =
            {f, obs.body_local, obs.world_id, -1};
      }
    }
    kf.visible_points.assign(seen_points.begin(), seen_points.end());
    kfs.push_back(std::move(kf));

    graph.nodes.push_back(est_pose.inverse());
    if (f > 0) {
      PoseGraphEdge e;
      e.i = f - 1;
      e.j = f;
      e.t_ij = frame.odom_increment.inverse();
      graph.edges.push_back(e);
    }

    // association across all cameras of this frame
    std::vector<Detection> dets;
    std::vector<long> true_ids;
    std::vector<std::vector<int>> det_index(n_cams);
    for (int c = 0; c < n_cams; ++c) {
      for (size_t d = 0; d < frame.detections[c].size(); ++d) {
        Detection det = frame.detections[c][d];
        for (const auto& obs : frame.point_observations) {
          if (obs.camera_id == c &&
              obs.parent_detection == static_cast<int>(d)) {
            det.point_ids.push_back(obs.track_id);
          }
        }
        det_index[c].push_back(static_cast<int>(dets.size()));
        dets.push_back(std::move(det));
        const int tid = frame.true_ids[c][d];
        true_ids.push_back(tid >= 0 ? tid : -1000 - (fp_counter++));
      }
    }
    std::vector<int> assignment;
    {
      detail::StageTimer t(report.t_associate);
      assignment = unify_tracks(store, dets, f, kfs[f].camera_poses,
                                cfg.association);
      for (size_t d = 0; d < dets.size(); ++d) {
        if (assignment[d] >= 0) {
          update_memory(store.tracks[assignment[d]], dets[d], cfg.association);
        }
        assoc_records.push_back({assignment[d], true_ids[d]});
      }
    }
    std::set<int> frame_tracks(assignment.begin(), assignment.end());
    frame_tracks.erase(-1);
    kfs[f].seen_tracks.assign(frame_tracks.begin(), frame_tracks.end());

    // periodic landmark refinement
    {
      detail::StageTimer t(report.t_estimate);
      for (int tid : kfs[f].seen_tracks) {
        ObjectTrack& track = store.tracks[tid];
        const bool first_possible =
            !track.landmark &&
            track.total_observations >= cfg.estimator.min_observations;
        if (first_possible ||
            track.observations_since_optimize >= cfg.reoptimize_every) {
          solve_track(track);
        }
      }
    }

    // loop closure
    if (cfg.loop_closure_enabled && f >= cfg.loop.min_temporal_gap) {
      detail::StageTimer t(report.t_loop);
      for (auto& old : kfs) refresh_descriptor(old);
      const auto candidates = loop_candidates(kfs[f], kfs, cfg.loop);
      if (!candidates.empty()) {
        const int cand = candidates.front().keyframe_index;
        // correspondence matching stand-in: shared world ids
        std::vector<Vec3> q_local, c_local;
        for (const auto& [wid, local] : kf_point_locals[f]) {
          const auto it = kf_point_locals[cand].find(wid);
          if (it != kf_point_locals[cand].end()) {
            q_local.push_back(local);
            c_local.push_back(it->second);
          }
        }
        LoopEvent event;
        event.query = f;
        event.candidate = cand;
        event.similarity = candidates.front().similarity;
        if (q_local.size() >= 3) {
          LoopConfig vcfg = cfg.loop;
          vcfg.ransac_seed = cfg.loop.ransac_seed ^ (0x9E37ull * (f + 1));
          const VerifyResult ver = geometric_verify(q_local, c_local, vcfg);
          if (ver.accepted) {
            event.verified = true;
            event.relative = ver.relative;
            // a verified loop is correct when its relative pose matches
            // the ground truth (the constraint it adds is sound)
            const Pose gt_rel =
                gt.rig_poses[f].compose(gt.rig_poses[cand].inverse());
            const double terr = (ver.relative.t - gt_rel.t).norm();
            const double rerr =
                so3_log(Mat3(ver.relative.R.transpose() * gt_rel.R)).norm();
            event.correct = terr < 0.5 && rerr < 5.0 * M_PI / 180.0;
            LoopConstraint constraint{f, cand, ver.relative};
            const auto result = correct_loop(graph, kfs, store, constraint,
                                             build_obs, cfg.estimator, cfg.loop);
            event.merges = static_cast<int>(result.merges.size());
            ++report.loops_verified;
          }
        }
        art.loops.push_back(event);
      }
    }
  }

  // final refinement and per-track feature selection
  {
    detail::StageTimer t(report.t_estimate);
    for (auto& track : store.tracks) {
      if (track.total_observations >= cfg.estimator.min_observations) {
        solve_track(track);
      }
    }
  }
  {
    detail::StageTimer t(report.t_scene_graph);
    for (auto& track : store.tracks) {
      if (track.memory.empty()) continue;
      std::vector<Embedding> feats;
      for (const auto& [key, det] : track.memory) feats.push_back(det.embedding);
      track.selected_feature =
          select_segment_feature(feats, cfg.dbscan_eps, cfg.dbscan_min_pts)
              .feature;
    }
    std::vector<MetricPose> poses;
    for (const auto& kf : kfs) {
      poses.push_back(MetricPose::from_world_to_body(kf.frame_id, kf.rig_pose));
    }
    std::vector<MetricPoint> points;
    for (const auto& [tid, rec] : point_records) {
      MetricPoint p;
      p.id = tid;
      p.position = point_world(rec);
      for (const auto& track : store.tracks) {
        if (track.associated_point_ids.count(tid)) {
          p.label = track.class_label;
          break;
        }
      }
      points.push_back(std::move(p));
    }
    art.graph = build_scene_graph(store, gt.roads, poses, points);
  }

  // evaluation
  {
    detail::StageTimer t(report.t_evaluate);
    for (const auto& kf : kfs) art.traj_post.push_back(kf.rig_pose);
    art.traj_gt = gt.rig_poses;
    report.ate_pre = evaluate_ate(art.traj_pre, art.traj_gt);
    report.ate_post = evaluate_ate(art.traj_post, art.traj_gt);
    report.objects = evaluate_objects(store, gt, cfg.gt_match_gate);
    report.association = evaluate_association(assoc_records);

    int correct = 0, verified = 0;
    for (const auto& l : art.loops) {
      if (l.verified) {
        ++verified;
        if (l.correct) ++correct;
      }
    }
    report.loop_precision = verified > 0 ? static_cast<double>(correct) / verified : 1.0;
    // opportunities: query frames with a gap-compatible ground-truth revisit
    int opportunities = 0, covered = 0;
    for (int f = cfg.loop.min_temporal_gap; f < n_frames; ++f) {
      bool near = false;
      for (int c = 0; c + cfg.loop.min_temporal_gap <= f; ++c) {
        if ((gt.rig_poses[f].center() - gt.rig_poses[c].center()).norm() <
            cfg.loop_gt_dist) {
          near = true;
          break;
        }
      }
      if (!near) continue;
      ++opportunities;
      for (const auto& l : art.loops) {
        if (l.query == f && l.verified && l.correct) {
          ++covered;
          break;
        }
      }
    }
    report.loop_recall =
        opportunities > 0 ? static_cast<double>(covered) / opportunities : 1.0;

    // duplicate landmarks shadowing a single GT object
    for (const auto& obj : gt.objects) {
      int near = 0;
      for (const auto& track : store.tracks) {
        if (track.landmark &&
            (track.landmark->center - obj.shape.center).norm() <
                cfg.gt_match_gate) {
          ++near;
        }
      }
      if (near > 1) report.duplicate_pairs += near - 1;
    }
  }
  return art;
}

// ---------------------------------------------------------------------------
// artifact writers

/// TUM-style line per keyframe: timestamp tx ty tz qx qy qz qw (the body
/// pose in world coordinates), 9 significant digits.
inline std::string trajectory_string(const std::vector<Pose>& world_to_body) {
  std::ostringstream os;
  for (size_t k = 0; k < world_to_body.size(); ++k) {
    const Pose b2w = world_to_body[k].inverse();
    const Vec4 q = quat_wxyz_from_rotation(b2w.R);
    os << g9(static_cast<double>(k)) << ' ' << g9(b2w.t.x()) << ' '
       << g9(b2w.t.y()) << ' ' << g9(b2w.t.z()) << ' ' << g9(q[1]) << ' '
       << g9(q[2]) << ' ' << g9(q[3]) << ' ' << g9(q[0]) << '\n';
  }
  return os.str();
}

inline std::vector<Pose> parse_trajectory(const std::string& text) {
  std::vector<Pose> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw IoFailure("malformed trajectory line: " + line);
    }
    const Pose b2w(rotation_from_quat_wxyz(Vec4(qw, qx, qy, qz)),
                   Vec3(tx, ty, tz));
    out.push_back(b2w.inverse());
  }
  return out;
}

inline std::vector<Pose> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open trajectory " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trajectory(ss.str());
}

/// metric,stage,value rows; deterministic content only (timings go to a
/// separate sidecar).
inline std::string report_csv(const RunReport& r) {
  std::ostringstream os;
  os << "metric,stage,value\n";
  os << "ate_rmse,pre_loop," << g9(r.ate_pre) << '\n';
  os << "ate_rmse,post_loop," << g9(r.ate_post) << '\n';
  os << "center_error_mean,objects," << g9(r.objects.mean_center_error) << '\n';
  os << "axis_rel_error_mean,objects," << g9(r.objects.mean_axis_rel_error)
     << '\n';
  os << "iou3d_mean,objects," << g9(r.objects.mean_iou3d) << '\n';
  os << "gt_count,objects," << r.objects.gt_count << '\n';
  os << "estimated_count,objects," << r.objects.estimated_count << '\n';
  os << "matched_count,objects," << r.objects.matched << '\n';
  os << "duplicate_pairs,objects," << r.duplicate_pairs << '\n';
  os << "precision,association," << g9(r.association.precision) << '\n';
  os << "recall,association," << g9(r.association.recall) << '\n';
  os << "precision,loop_detection," << g9(r.loop_precision) << '\n';
  os << "recall,loop_detection," << g9(r.loop_recall) << '\n';
  os << "verified_count,loop_detection," << r.loops_verified << '\n';
  return os.str();
}

inline std::string report_json(const RunReport& r) {
  std::ostringstream os;
  os << "{\"association\":{\"precision\":" << g9(r.association.precision)
     << ",\"recall\":" << g9(r.association.recall) << "},\"ate_rmse\":{\"post_loop\":"
     << g9(r.ate_post) << ",\"pre_loop\":" << g9(r.ate_pre)
     << "},\"loop_detection\":{\"precision\":" << g9(r.loop_precision)
     << ",\"recall\":" << g9(r.loop_recall)
     << ",\"verified_count\":" << r.loops_verified
     << "},\"objects\":{\"axis_rel_error_mean\":" << g9(r.objects.mean_axis_rel_error)
     << ",\"center_error_mean\":" << g9(r.objects.mean_center_error)
     << ",\"duplicate_pairs\":" << r.duplicate_pairs
     << ",\"estimated_count\":" << r.objects.estimated_count
     << ",\"gt_count\":" << r.objects.gt_count
     << ",\"iou3d_mean\":" << g9(r.objects.mean_iou3d)
     << ",\"matched_count\":" << r.objects.matched << "}}";
  return os.str();
}

inline std::string timings_csv(const RunReport& r) {
  std::ostringstream os;
  os << "stage,seconds\n";
  os << "simulate," << g9(r.t_simulate) << '\n';
  os << "associate," << g9(r.t_associate) << '\n';
  os << "estimate," << g9(r.t_estimate) << '\n';
  os << "loop," << g9(r.t_loop) << '\n';
  os << "scene_graph," << g9(r.t_scene_graph) << '\n';
  os << "evaluate," << g9(r.t_evaluate) << '\n';
  return os.str();
}

/// Debug dump of the synthetic world (objects, roads, prototypes).
inline std::string ground_truth_json(const GroundTruth& gt) {
  std::ostringstream os;
  os << "{\"objects\":[";
  for (size_t i = 0; i < gt.objects.size(); ++i) {
    const auto& o = gt.objects[i];
    if (i) os << ',';
    os << "{\"center\":";
    detail::emit_vec3(os, o.shape.center);
    os << ",\"class\":";
    detail::emit_string(os, o.class_label);
    os << ",\"id\":" << o.id << ",\"rotation\":";
    detail::emit_vec4(os, quat_wxyz_from_rotation(o.shape.rotation));
    os << ",\"semi_axes\":";
    detail::emit_vec3(os, o.shape.semi_axes);
    os << '}';
  }
  os << "],\"prototypes\":[";
  for (size_t c = 0; c < gt.class_prototypes.size(); ++c) {
    if (c) os << ',';
    os << "{\"class\":";
    detail::emit_string(os, "class_" + std::to_string(c));
    os << ",\"embedding\":[";
    for (int k = 0; k < gt.class_prototypes[c].size(); ++k) {
      if (k) os << ',';
      os << g9(gt.class_prototypes[c][k]);
    }
    os << "]}";
  }
  os << "],\"roads\":[";
  for (size_t r = 0; r < gt.roads.size(); ++r) {
    if (r) os << ',';
    os << "{\"id\":" << gt.roads[r].id << ",\"polyline\":[";
    for (size_t k = 0; k < gt.roads[r].points.size(); ++k) {
      if (k) os << ',';
      detail::emit_vec3(os, gt.roads[r].points[k]);
    }
    os << "]}";
  }
  os << "]}";
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << content;
  if (!out) throw IoFailure("failed writing " + path);
}

inline void write_artifacts(const PipelineArtifacts& art,
                            const std::string& out_dir,
                            const std::string& report_format = "csv") {
  write_file(out_dir + "/trajectory_pre.txt", trajectory_string(art.traj_pre));
  write_file(out_dir + "/trajectory_post.txt",
             trajectory_string(art.traj_post));
  write_file(out_dir + "/trajectory_gt.txt", trajectory_string(art.traj_gt));
  export_graph(art.graph, out_dir + "/scene_graph.json");
  write_file(out_dir + "/ground_truth.json", ground_truth_json(art.gt));
  if (report_format == "json") {
    write_file(out_dir + "/report.json", report_json(art.report));
  } else if (report_format == "csv") {
    write_file(out_dir + "/report.csv", report_csv(art.report));
  } else {
    throw ConfigError("unknown report format: " + report_format);
  }
  write_file(out_dir + "/timings.csv", timings_csv(art.report));
}

}  // namespace oslam
