#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <json.hpp>

#include "oslam/association.hpp"
#include "oslam/errors.hpp"
#include "oslam/format.hpp"
#include "oslam/pose.hpp"
#include "oslam/quadric.hpp"
#include "oslam/semantic.hpp"

namespace oslam {

using Vec4 = Eigen::Vector4d;

/// Sign-canonical unit quaternion (wxyz) of a rotation matrix. The
/// quaternion is the primary stored rotation of scene-graph nodes so an
/// import/export cycle never re-derives (and so never re-rounds) it.
inline Vec4 quat_wxyz_from_rotation(const Mat3& R) {
  Eigen::Quaterniond q(R);
  if (q.w() < 0 ||
      (q.w() == 0 &&
       (q.x() < 0 || (q.x() == 0 && (q.y() < 0 || (q.y() == 0 && q.z() < 0)))))) {
    q.coeffs() = -q.coeffs();
  }
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

inline Mat3 rotation_from_quat_wxyz(const Vec4& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3])
      .normalized()
      .toRotationMatrix();
}

struct RoadPolyline {
  int id = 0;
  std::vector<Vec3> points;
};

struct MetricPoint {
  long id = 0;
  Vec3 position = Vec3::Zero();
  std::string label;
};

/// Pose-graph node reference in the metric layer, stored body-to-world.
struct MetricPose {
  int frame_id = 0;
  Vec4 q_wxyz = Vec4(1, 0, 0, 0);
  Vec3 position = Vec3::Zero();

  static MetricPose from_world_to_body(int frame_id, const Pose& world_to_body) {
    const Pose b2w = world_to_body.inverse();
    return {frame_id, quat_wxyz_from_rotation(b2w.R), b2w.t};
  }

  Pose world_to_body() const {
    return Pose(rotation_from_quat_wxyz(q_wxyz), position).inverse();
  }
};

struct SceneGraphObject {
  int object_id = 0;
  std::string class_label;
  Embedding embedding;
  Vec3 center = Vec3::Zero();
  Vec4 rotation_wxyz = Vec4(1, 0, 0, 0);
  Vec3 semi_axes = Vec3::Ones();
  int parent_road = -1;  // -1: attached directly to the root

  EllipsoidParams ellipsoid() const {
    EllipsoidParams e;
    e.center = center;
    e.rotation = rotation_from_quat_wxyz(rotation_wxyz);
    e.semi_axes = semi_axes;
    return e;
  }
};

/// Four layers: root (environment), roads, objects, metric map. The
/// parent relation above the metric layer is a tree: every object hangs
/// off exactly one road (or the root when no roads exist).
struct SceneGraph {
  std::string root_label = "environment";
  std::vector<RoadPolyline> roads;
  std::vector<SceneGraphObject> objects;
  std::vector<MetricPose> poses;
  std::vector<MetricPoint> points;
  bool degenerate_no_roads = false;
};

namespace detail {

inline double point_segment_distance(const Vec3& p, const Vec3& a,
                                     const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline double point_polyline_distance(const Vec3& p, const RoadPolyline& road) {
  if (road.points.empty()) return std::numeric_limits<double>::infinity();
  if (road.points.size() == 1) return (p - road.points[0]).norm();
  double best = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k + 1 < road.points.size(); ++k) {
    best = std::min(best,
                    point_segment_distance(p, road.points[k], road.points[k + 1]));
  }
  return best;
}

}  // namespace detail

/// Nearest road by perpendicular distance to the object center; ties go
/// to the lower road id (roads must be sorted by id).
inline int nearest_road(const Vec3& center,
                        const std::vector<RoadPolyline>& roads) {
  int best_id = -1;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& road : roads) {
    const double d = detail::point_polyline_distance(center, road);
    if (d < best) {
      best = d;
      best_id = road.id;
    }
  }
  return best_id;
}

inline SceneGraph build_scene_graph(const TrackStore& store,
                                    std::vector<RoadPolyline> roads,
                                    std::vector<MetricPose> poses,
                                    std::vector<MetricPoint> points) {
  SceneGraph g;
  std::sort(roads.begin(), roads.end(),
            [](const RoadPolyline& a, const RoadPolyline& b) { return a.id < b.id; });
  g.roads = std::move(roads);
  g.poses = std::move(poses);
  g.points = std::move(points);
  g.degenerate_no_roads = g.roads.empty();
  for (const auto& track : store.tracks) {
    if (!track.landmark) continue;
    SceneGraphObject obj;
    obj.object_id = track.object_id;
    obj.class_label = track.class_label;
    obj.embedding =
        track.selected_feature ? *track.selected_feature : track.embedding;
    obj.center = track.landmark->center;
    obj.rotation_wxyz = quat_wxyz_from_rotation(track.landmark->rotation);
    obj.semi_axes = track.landmark->semi_axes;
    obj.parent_road =
        g.degenerate_no_roads ? -1 : nearest_road(obj.center, g.roads);
    g.objects.push_back(std::move(obj));
  }
  std::sort(g.objects.begin(), g.objects.end(),
            [](const SceneGraphObject& a, const SceneGraphObject& b) {
              return a.object_id < b.object_id;
            });
  return g;
}

struct QueryHit {
  int object_id = -1;
  double score = 0;
};

/// Objects ranked by cosine to the query embedding, ties broken toward
/// the lower object id.
inline std::vector<QueryHit> query_objects(const SceneGraph& g,
                                           const Embedding& query, int top_k) {
  if (top_k < 1) throw DegenerateInput("top_k must be >= 1");
  std::vector<QueryHit> hits;
  hits.reserve(g.objects.size());
  for (const auto& obj : g.objects) {
    hits.push_back({obj.object_id, cosine(obj.embedding, query)});
  }
  std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.object_id < b.object_id;
  });
  if (static_cast<int>(hits.size()) > top_k) hits.resize(top_k);
  return hits;
}

namespace detail {

inline void emit_vec3(std::ostream& os, const Vec3& v) {
  os << '[' << g9(v.x()) << ',' << g9(v.y()) << ',' << g9(v.z()) << ']';
}

inline void emit_vec4(std::ostream& os, const Vec4& v) {
  os << '[' << g9(v[0]) << ',' << g9(v[1]) << ',' << g9(v[2]) << ','
     << g9(v[3]) << ']';
}

inline void emit_string(std::ostream& os, const std::string& s) {
  os << '"';
  for (char c : s) {
    if (c == '"' || c == '\\') os << '\\';
    os << c;
  }
  os << '"';
}

}  // namespace detail

/// Serialize with sorted keys and fixed 9-significant-digit floats; the
/// output is byte-stable for identical input and survives an
/// export/import/export round trip unchanged.
inline std::string export_graph_string(const SceneGraph& g) {
  std::ostringstream os;
  os << "{\"metric\":{\"points\":[";
  for (size_t i = 0; i < g.points.size(); ++i) {
    const auto& p = g.points[i];
    if (i) os << ',';
    os << "{\"id\":" << p.id << ",\"label\":";
    detail::emit_string(os, p.label);
    os << ",\"position\":";
    detail::emit_vec3(os, p.position);
    os << '}';
  }
  os << "],\"poses\":[";
  for (size_t i = 0; i < g.poses.size(); ++i) {
    const auto& mp = g.poses[i];
    if (i) os << ',';
    os << "{\"frame\":" << mp.frame_id << ",\"q\":";
    detail::emit_vec4(os, mp.q_wxyz);
    os << ",\"t\":";
    detail::emit_vec3(os, mp.position);
    os << '}';
  }
  os << "]},\"objects\":[";
  for (size_t i = 0; i < g.objects.size(); ++i) {
    const auto& o = g.objects[i];
    if (i) os << ',';
    os << "{\"center\":";
    detail::emit_vec3(os, o.center);
    os << ",\"class\":";
    detail::emit_string(os, o.class_label);
    os << ",\"embedding\":[";
    for (int k = 0; k < o.embedding.size(); ++k) {
      if (k) os << ',';
      os << g9(o.embedding[k]);
    }
    os << "],\"id\":" << o.object_id << ",\"parent_road\":" << o.parent_road
       << ",\"rotation\":";
    detail::emit_vec4(os, o.rotation_wxyz);
    os << ",\"semi_axes\":";
    detail::emit_vec3(os, o.semi_axes);
    os << '}';
  }
  os << "],\"roads\":[";
  for (size_t i = 0; i < g.roads.size(); ++i) {
    const auto& r = g.roads[i];
    if (i) os << ',';
    os << "{\"id\":" << r.id << ",\"polyline\":[";
    for (size_t k = 0; k < r.points.size(); ++k) {
      if (k) os << ',';
      detail::emit_vec3(os, r.points[k]);
    }
    os << "]}";
  }
  os << "],\"root\":{\"label\":";
  detail::emit_string(os, g.root_label);
  os << ",\"n_objects\":" << g.objects.size()
     << ",\"n_roads\":" << g.roads.size() << "},\"v\":1}";
  return os.str();
}

inline void export_graph(const SceneGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << export_graph_string(g);
  if (!out) throw IoFailure("failed writing " + path);
}

inline SceneGraph import_graph_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoFailure(std::string("scene graph parse error: ") + e.what());
  }
  if (!j.contains("v") || j["v"].get<int>() != 1) {
    throw IoFailure("unsupported scene graph schema version");
  }
  SceneGraph g;
  g.root_label = j["root"]["label"].get<std::string>();
  auto to_vec3 = [](const nlohmann::json& a) {
    return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  auto to_vec4 = [](const nlohmann::json& a) {
    return Vec4(a[0].get<double>(), a[1].get<double>(), a[2].get<double>(),
                a[3].get<double>());
  };
  for (const auto& rj : j["roads"]) {
    RoadPolyline r;
    r.id = rj["id"].get<int>();
    for (const auto& p : rj["polyline"]) r.points.push_back(to_vec3(p));
    g.roads.push_back(std::move(r));
  }
  for (const auto& oj : j["objects"]) {
    SceneGraphObject o;
    o.object_id = oj["id"].get<int>();
    o.class_label = oj["class"].get<std::string>();
    o.parent_road = oj["parent_road"].get<int>();
    o.center = to_vec3(oj["center"]);
    o.rotation_wxyz = to_vec4(oj["rotation"]);
    o.semi_axes = to_vec3(oj["semi_axes"]);
    o.embedding = Embedding::Zero(oj["embedding"].size());
    for (size_t k = 0; k < oj["embedding"].size(); ++k) {
      o.embedding[k] = oj["embedding"][k].get<double>();
    }
    g.objects.push_back(std::move(o));
  }
  for (const auto& pj : j["metric"]["points"]) {
    MetricPoint p;
    p.id = pj["id"].get<long>();
    p.label = pj["label"].get<std::string>();
    p.position = to_vec3(pj["position"]);
    g.points.push_back(std::move(p));
  }
  for (const auto& mj : j["metric"]["poses"]) {
    MetricPose mp;
    mp.frame_id = mj["frame"].get<int>();
    mp.q_wxyz = to_vec4(mj["q"]);
    mp.position = to_vec3(mj["t"]);
    g.poses.push_back(mp);
  }
  g.degenerate_no_roads = g.roads.empty();
  return g;
}

inline SceneGraph import_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return import_graph_string(ss.str());
}

}  // namespace oslam
