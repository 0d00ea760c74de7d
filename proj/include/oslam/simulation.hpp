#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "oslam/association.hpp"
#include "oslam/camera.hpp"
#include "oslam/errors.hpp"
#include "oslam/pose.hpp"
#include "oslam/quadric.hpp"
#include "oslam/rng.hpp"
#include "oslam/scene_graph.hpp"
#include "oslam/semantic.hpp"

namespace oslam {

/// Deterministic synthetic world standing in for the perception front
/// end: surround rig on a closed (or out-and-back) trajectory, ellipsoid
/// objects along the roads, class-prototype embeddings, map points, and
/// configurable noise on every channel.
struct SimConfig {
  std::uint64_t seed = 1;

  // rig: n_cameras yaw-spaced evenly, unified model
  int n_cameras = 4;
  double fx = 300, fy = 300, cx = 320, cy = 240;
  double xi = 0.8;
  double fov_deg = 100.0;   // full cone angle accepted around the optical axis
  double max_range = 30.0;  // object detection range, meters
  double rig_height = 1.6;

  // trajectory: closed polygon loop (or out-and-back when reverse_revisit)
  std::vector<Vec2> waypoints = {{0, 0}, {40, 0}, {40, 40}, {0, 40}};
  int n_keyframes = 60;
  bool reverse_revisit = false;

  // objects
  int n_objects = 25;
  int n_classes = 5;
  double axis_min = 0.4, axis_max = 1.5;
  double lateral_min = 2.0, lateral_max = 6.0;

  // map points
  int points_per_object = 6;        // emitted as antipodal surface pairs
  double road_point_spacing = 1.0;  // meters
  double point_range = 25.0;
  double sigma_point = 0.0;

  // detection noise
  double sigma_mu = 0.0;
  double sigma_sigma = 0.0;
  double p_drop = 0.0;
  double false_positive_rate = 0.0;
  double p_corrupt = 0.0;

  // odometry noise
  double odom_drift_per_m = 0.0;
  double odom_jitter = 0.0;  // stddev fraction of step length

  // embeddings
  int embedding_dim = 64;
  double sigma_embedding = 0.02;
  Vec3 fusion_weights = Vec3(0.25, 0.25, 0.5);

  void validate() const {
    if (waypoints.size() < 2) throw InfeasibleConfig("need >= 2 waypoints");
    if (n_keyframes < 2) throw InfeasibleConfig("need >= 2 keyframes");
    if (n_cameras < 1) throw InfeasibleConfig("need >= 1 camera");
    if (n_classes < 1) throw InfeasibleConfig("need >= 1 class");
    if (n_objects < 0) throw InfeasibleConfig("negative object count");
    if (embedding_dim < 2) throw InfeasibleConfig("embedding dim too small");
    for (double p : {p_drop, false_positive_rate, p_corrupt}) {
      if (p < 0 || p > 1) throw InfeasibleConfig("probability outside [0,1]");
    }
    for (double s : {sigma_mu, sigma_sigma, sigma_point, sigma_embedding,
                     odom_drift_per_m, odom_jitter}) {
      if (s < 0) throw InfeasibleConfig("negative noise level");
    }
    if (axis_min <= 0 || axis_max < axis_min) {
      throw InfeasibleConfig("bad semi-axis range");
    }
  }
};

struct GtObject {
  int id = 0;
  EllipsoidParams shape;
  int class_id = 0;
  std::string class_label;
};

struct GtPoint {
  long id = 0;
  Vec3 position = Vec3::Zero();
  int parent_object = -1;  // -1: road point
};

struct GroundTruth {
  CameraRig rig;
  std::vector<Pose> rig_poses;       // world-to-body per keyframe
  std::vector<double> headings;      // yaw per keyframe
  std::vector<GtObject> objects;
  std::vector<Embedding> class_prototypes;
  Embedding background_feature;
  std::vector<RoadPolyline> roads;
  std::vector<GtPoint> points;
  // front-end point track ids per (keyframe, point index); -1 = invisible.
  // A track id changes when the point re-enters view after a gap.
  std::vector<std::vector<long>> point_track_ids;
};

namespace sim_detail {

inline Pose body_pose(const Vec3& position, double yaw) {
  const Vec3 xb(std::cos(yaw), std::sin(yaw), 0);  // forward
  const Vec3 yb(-std::sin(yaw), std::cos(yaw), 0); // left
  const Vec3 zb(0, 0, 1);
  Mat3 R;  // world-to-body rows are the body axes
  R.row(0) = xb.transpose();
  R.row(1) = yb.transpose();
  R.row(2) = zb.transpose();
  return Pose(R, -R * position);
}

/// Camera with optical axis at the given yaw in the body frame:
/// z_cam = forward, x_cam = right, y_cam = down.
inline Pose camera_extrinsic(double yaw) {
  const Vec3 zc(std::cos(yaw), std::sin(yaw), 0);
  const Vec3 xc(std::sin(yaw), -std::cos(yaw), 0);
  const Vec3 yc(0, 0, -1);
  Mat3 R;  // body-to-camera rows are the camera axes
  R.row(0) = xc.transpose();
  R.row(1) = yc.transpose();
  R.row(2) = zc.transpose();
  return Pose(R, Vec3::Zero());
}

struct PathSample {
  Vec3 position;
  double yaw;
};

// Arc-length sample of a polyline (open or closed).
inline PathSample sample_path(const std::vector<Vec2>& pts, bool closed,
                              double s, bool reverse_heading) {
  const int n = static_cast<int>(pts.size());
  const int segs = closed ? n : n - 1;
  double total = 0;
  std::vector<double> lens(segs);
  for (int k = 0; k < segs; ++k) {
    lens[k] = (pts[(k + 1) % n] - pts[k]).norm();
    total += lens[k];
  }
  s = std::fmod(s, total);
  if (s < 0) s += total;
  for (int k = 0; k < segs; ++k) {
    if (s <= lens[k] || k == segs - 1) {
      const Vec2 a = pts[k];
      const Vec2 b = pts[(k + 1) % n];
      const Vec2 dir = (b - a).normalized();
      const Vec2 p = a + std::min(s, lens[k]) * dir;
      double yaw = std::atan2(dir.y(), dir.x());
      if (reverse_heading) yaw += M_PI;
      return {Vec3(p.x(), p.y(), 0), yaw};
    }
    s -= lens[k];
  }
  return {Vec3(pts[0].x(), pts[0].y(), 0), 0};
}

inline double path_length(const std::vector<Vec2>& pts, bool closed) {
  const int n = static_cast<int>(pts.size());
  const int segs = closed ? n : n - 1;
  double total = 0;
  for (int k = 0; k < segs; ++k) total += (pts[(k + 1) % n] - pts[k]).norm();
  return total;
}

inline bool in_camera_view(const Pose& camera, const Vec3& p_world,
                           double fov_deg, double range, double min_z) {
  const Vec3 pc = camera.apply(p_world);
  if (pc.z() <= min_z) return false;
  if (pc.norm() > range) return false;
  const double angle = std::acos(std::clamp(pc.z() / pc.norm(), -1.0, 1.0));
  return angle <= fov_deg * M_PI / 360.0;  // half the full cone
}

inline Mat2 sym_exp2(const Mat2& S) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(S);
  const Vec2 d = es.eigenvalues().array().exp();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace sim_detail

inline GroundTruth generate_world(const SimConfig& cfg) {
  cfg.validate();
  GroundTruth gt;

  // rig
  CameraIntrinsics intr{cfg.fx, cfg.fy, cfg.cx, cfg.cy, cfg.xi};
  for (int c = 0; c < cfg.n_cameras; ++c) {
    const double yaw = 2.0 * M_PI * c / cfg.n_cameras;
    gt.rig.cameras.push_back({intr, sim_detail::camera_extrinsic(yaw)});
  }

  // trajectory
  const bool closed = !cfg.reverse_revisit;
  const double total = sim_detail::path_length(cfg.waypoints, closed);
  for (int k = 0; k < cfg.n_keyframes; ++k) {
    double s;
    bool rev = false;
    if (closed) {
      s = total * k / cfg.n_keyframes;
    } else {
      // out along the open path, turn around, come back
      const int half = cfg.n_keyframes / 2;
      if (k <= half) {
        s = total * k / half;
      } else {
        s = total * (cfg.n_keyframes - 1 - k) / (cfg.n_keyframes - 1 - half);
        rev = true;
      }
    }
    const auto sample = sim_detail::sample_path(cfg.waypoints, closed, s, rev);
    gt.headings.push_back(sample.yaw);
    gt.rig_poses.push_back(sim_detail::body_pose(
        sample.position + Vec3(0, 0, cfg.rig_height), sample.yaw));
  }

  // roads: one polyline per path edge
  {
    const int n = static_cast<int>(cfg.waypoints.size());
    const int segs = closed ? n : n - 1;
    for (int k = 0; k < segs; ++k) {
      RoadPolyline road;
      road.id = k;
      const Vec2 a = cfg.waypoints[k];
      const Vec2 b = cfg.waypoints[(k + 1) % n];
      road.points = {Vec3(a.x(), a.y(), 0), Vec3(b.x(), b.y(), 0)};
      gt.roads.push_back(std::move(road));
    }
  }

  // class prototypes and the image-level background direction
  {
    Rng rng = Rng::stream(cfg.seed, rng_channel::kEmbeddings);
    for (int c = 0; c < cfg.n_classes; ++c) {
      gt.class_prototypes.push_back(
          normalize_embedding(rng.normal_vector(cfg.embedding_dim)));
    }
    gt.background_feature =
        normalize_embedding(rng.normal_vector(cfg.embedding_dim));
  }

  // objects along the roads with a minimum mutual separation
  {
    Rng rng = Rng::stream(cfg.seed, rng_channel::kWorldLayout);
    for (int i = 0; i < cfg.n_objects; ++i) {
      GtObject obj;
      obj.id = i;
      obj.class_id = static_cast<int>(rng.index(cfg.n_classes));
      obj.class_label = "class_" + std::to_string(obj.class_id);
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double s = rng.uniform(0, total);
        const auto sample = sim_detail::sample_path(cfg.waypoints, closed, s, false);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double off = rng.uniform(cfg.lateral_min, cfg.lateral_max);
        const Vec3 lateral(-std::sin(sample.yaw), std::cos(sample.yaw), 0);
        obj.shape.center = sample.position + side * off * lateral +
                           Vec3(0, 0, rng.uniform(0.5, 2.0));
        bool clear = true;
        for (const auto& other : gt.objects) {
          if ((other.shape.center - obj.shape.center).norm() < 3.0) {
            clear = false;
            break;
          }
        }
        if (clear) break;
      }
      obj.shape.semi_axes = Vec3(rng.uniform(cfg.axis_min, cfg.axis_max),
                                 rng.uniform(cfg.axis_min, cfg.axis_max),
                                 rng.uniform(cfg.axis_min, cfg.axis_max));
      obj.shape.rotation = so3_exp(Vec3(0, 0, rng.uniform(0, M_PI)));
      gt.objects.push_back(std::move(obj));
    }
  }

  // map points: antipodal surface pairs per object, then road points
  {
    Rng rng = Rng::stream(cfg.seed, rng_channel::kPoints);
    long next_id = 0;
    for (const auto& obj : gt.objects) {
      for (int k = 0; k < cfg.points_per_object / 2; ++k) {
        const Vec3 u = rng.unit_vector3();
        const Vec3 offset =
            obj.shape.rotation * (obj.shape.semi_axes.asDiagonal() * u);
        gt.points.push_back({next_id++, obj.shape.center + offset, obj.id});
        gt.points.push_back({next_id++, obj.shape.center - offset, obj.id});
      }
    }
    for (const auto& road : gt.roads) {
      const double len = (road.points[1] - road.points[0]).norm();
      const Vec3 dir = (road.points[1] - road.points[0]) / len;
      const Vec3 lateral(-dir.y(), dir.x(), 0);
      for (double s = 0; s < len; s += cfg.road_point_spacing) {
        const Vec3 p = road.points[0] + s * dir +
                       rng.uniform(-2.0, 2.0) * lateral +
                       Vec3(0, 0, rng.uniform(0.0, 1.5));
        gt.points.push_back({next_id++, p, -1});
      }
    }
  }

  // front-end point tracks: a track survives only over consecutive
  // visible keyframes; re-entry after a gap begins a fresh id
  {
    long next_track = 0;
    gt.point_track_ids.assign(cfg.n_keyframes,
                              std::vector<long>(gt.points.size(), -1));
    std::vector<long> active(gt.points.size(), -1);
    for (int f = 0; f < cfg.n_keyframes; ++f) {
      for (size_t p = 0; p < gt.points.size(); ++p) {
        bool visible = false;
        for (int c = 0; c < cfg.n_cameras && !visible; ++c) {
          const Pose cam = gt.rig.camera_pose(c, gt.rig_poses[f]);
          visible = sim_detail::in_camera_view(cam, gt.points[p].position,
                                               cfg.fov_deg, cfg.point_range, 0.3);
        }
        if (!visible) {
          active[p] = -1;
          continue;
        }
        if (active[p] < 0) active[p] = next_track++;
        gt.point_track_ids[f][p] = active[p];
      }
    }
  }
  return gt;
}

struct PointObservation {
  long track_id = -1;
  long world_id = -1;  // ground-truth point id; matcher stand-in only
  int camera_id = 0;
  Vec3 body_local = Vec3::Zero();
  int parent_detection = -1;  // index into that camera's detection list
};

struct FrameData {
  int frame_id = 0;
  Pose odom_increment;  // maps body_{k-1} coordinates to body_k ones
  std::vector<std::vector<Detection>> detections;  // per camera
  std::vector<std::vector<int>> true_ids;          // parallel; -1 = false positive
  std::vector<PointObservation> point_observations;
  std::vector<Embedding> camera_features;
};

/// One keyframe of synthetic perception: per-camera ellipse detections
/// with semantic embeddings and (possibly corrupted) track hints, map
/// point observations, image-level camera features, and the drifting
/// odometry increment.
inline FrameData simulate_frame(const GroundTruth& gt, const SimConfig& cfg,
                                int frame_id) {
  if (frame_id < 0 || frame_id >= static_cast<int>(gt.rig_poses.size())) {
    throw InfeasibleConfig("frame_id outside the trajectory");
  }
  FrameData frame;
  frame.frame_id = frame_id;
  const Pose& body = gt.rig_poses[frame_id];
  const int n_cams = gt.rig.size();
  frame.detections.resize(n_cams);
  frame.true_ids.resize(n_cams);

  // object detections
  for (int c = 0; c < n_cams; ++c) {
    const Pose cam = gt.rig.camera_pose(c, body);
    for (const auto& obj : gt.objects) {
      if (!sim_detail::in_camera_view(cam, obj.shape.center, cfg.fov_deg,
                                      cfg.max_range,
                                      obj.shape.semi_axes.maxCoeff())) {
        continue;
      }
      GaussianEllipse ellipse;
      try {
        ellipse = conic_to_gaussian(project_quadric(obj.shape, cam));
      } catch (const Error&) {
        continue;
      }
      Rng noise = Rng::stream(cfg.seed, rng_channel::kEllipseNoise, frame_id,
                              c, obj.id);
      if (cfg.sigma_mu > 0) {
        ellipse.mu += cfg.sigma_mu * Vec2(noise.normal(), noise.normal());
      }
      if (cfg.sigma_sigma > 0) {
        Mat2 W;
        const double a = noise.normal(), b = noise.normal(), d = noise.normal();
        W << a, b, b, d;
        const Mat2 B = sim_detail::sym_exp2(Mat2(cfg.sigma_sigma * W));
        ellipse.sigma = B * ellipse.sigma * B.transpose();
      }
      Rng drop = Rng::stream(cfg.seed, rng_channel::kDropout, frame_id, c,
                             obj.id);
      if (cfg.p_drop > 0 && drop.uniform() < cfg.p_drop) continue;

      Detection det;
      det.camera_id = c;
      det.frame_id = frame_id;
      det.ellipse = ellipse;
      det.class_label = obj.class_label;

      long hint = obj.id;
      Rng corrupt = Rng::stream(cfg.seed, rng_channel::kHintCorruption,
                                frame_id, c, obj.id);
      if (cfg.p_corrupt > 0 && corrupt.uniform() < cfg.p_corrupt &&
          gt.objects.size() > 1) {
        long other = static_cast<long>(corrupt.index(gt.objects.size() - 1));
        if (other >= obj.id) ++other;
        hint = other;
      }
      det.track_hint = hint;

      Rng emb = Rng::stream(cfg.seed, rng_channel::kEmbeddings, frame_id + 1,
                            c, obj.id);
      const Embedding& proto = gt.class_prototypes[obj.class_id];
      auto draw = [&](double level) {
        return normalize_embedding(Embedding(
            proto + level * cfg.sigma_embedding * emb.normal_vector(cfg.embedding_dim)));
      };
      // three per-view crops at decreasing noise, fused
      det.embedding = fuse_view_features(draw(2.0), draw(1.5), draw(1.0),
                                         cfg.fusion_weights);
      frame.detections[c].push_back(std::move(det));
      frame.true_ids[c].push_back(obj.id);
    }

    // false positives
    Rng fp = Rng::stream(cfg.seed, rng_channel::kFalsePositives, frame_id, c);
    if (cfg.false_positive_rate > 0 && fp.uniform() < cfg.false_positive_rate) {
      Detection det;
      det.camera_id = c;
      det.frame_id = frame_id;
      const double r = std::tan(cfg.fov_deg * M_PI / 360.0) * 0.8;
      det.ellipse = GaussianEllipse::from_axes(
          Vec2(fp.uniform(-r, r), fp.uniform(-r, r)), fp.uniform(0.01, 0.08),
          fp.uniform(0.01, 0.05), fp.uniform(0, M_PI));
      const int cls = static_cast<int>(fp.index(cfg.n_classes));
      det.class_label = "class_" + std::to_string(cls);
      det.embedding = normalize_embedding(
          Embedding(gt.class_prototypes[cls] +
                    2.0 * cfg.sigma_embedding * fp.normal_vector(cfg.embedding_dim)));
      // a fresh tracker id a real front end would mint
      det.track_hint = 1000000 + static_cast<long>(frame_id) * 64 + c;
      frame.detections[c].push_back(std::move(det));
      frame.true_ids[c].push_back(-1);
    }
  }

  // map point observations (lowest camera that sees the point)
  for (size_t p = 0; p < gt.points.size(); ++p) {
    const long track = gt.point_track_ids[frame_id][p];
    if (track < 0) continue;
    int cam_id = -1;
    for (int c = 0; c < n_cams; ++c) {
      const Pose cam = gt.rig.camera_pose(c, body);
      if (sim_detail::in_camera_view(cam, gt.points[p].position, cfg.fov_deg,
                                     cfg.point_range, 0.3)) {
        cam_id = c;
        break;
      }
    }
    if (cam_id < 0) continue;
    PointObservation obs;
    obs.track_id = track;
    obs.world_id = gt.points[p].id;
    obs.camera_id = cam_id;
    Rng noise = Rng::stream(cfg.seed, rng_channel::kPoints, frame_id + 1, 0,
                            gt.points[p].id);
    obs.body_local = body.apply(gt.points[p].position) +
                     cfg.sigma_point * Vec3(noise.normal(), noise.normal(),
                                            noise.normal());
    // attach to the parent object's detection in that camera, if present
    const int parent = gt.points[p].parent_object;
    if (parent >= 0) {
      for (size_t d = 0; d < frame.detections[cam_id].size(); ++d) {
        if (frame.true_ids[cam_id][d] == parent) {
          obs.parent_detection = static_cast<int>(d);
          break;
        }
      }
      if (obs.parent_detection < 0) continue;  // mask missing: not observed
    }
    frame.point_observations.push_back(std::move(obs));
  }

  // image-level features per camera: distance-weighted mix of the
  // visible objects' prototypes over a background direction
  for (int c = 0; c < n_cams; ++c) {
    const Pose cam = gt.rig.camera_pose(c, body);
    Embedding acc = 0.1 * gt.background_feature;
    for (const auto& obj : gt.objects) {
      if (!sim_detail::in_camera_view(cam, obj.shape.center, cfg.fov_deg,
                                      cfg.max_range,
                                      obj.shape.semi_axes.maxCoeff())) {
        continue;
      }
      const double d = (cam.apply(obj.shape.center)).norm();
      acc += gt.class_prototypes[obj.class_id] / std::max(d, 1.0);
    }
    Rng noise = Rng::stream(cfg.seed, rng_channel::kEmbeddings, frame_id + 1,
                            100 + c);
    acc += cfg.sigma_embedding * noise.normal_vector(cfg.embedding_dim);
    frame.camera_features.push_back(normalize_embedding(acc));
  }

  // odometry increment with per-meter drift and jitter
  if (frame_id == 0) {
    frame.odom_increment = Pose();
  } else {
    const Pose rel_gt =
        gt.rig_poses[frame_id].compose(gt.rig_poses[frame_id - 1].inverse());
    const double step = rel_gt.t.norm();
    Rng dir_rng = Rng::stream(cfg.seed, rng_channel::kOdometry, 0);
    const Vec3 drift_dir = dir_rng.unit_vector3();
    Rng jitter = Rng::stream(cfg.seed, rng_channel::kOdometry, frame_id);
    Vec3 t = rel_gt.t + cfg.odom_drift_per_m * step * drift_dir;
    if (cfg.odom_jitter > 0) {
      t += cfg.odom_jitter * step *
           Vec3(jitter.normal(), jitter.normal(), jitter.normal());
    }
    frame.odom_increment = Pose(rel_gt.R, t);
  }
  return frame;
}

}  // namespace oslam
