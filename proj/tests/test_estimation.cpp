#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "oslam/estimation.hpp"
#include "oslam/rng.hpp"
#include "oracles.hpp"

using namespace oslam;

namespace {

Pose look_at(const Vec3& cam_center, const Vec3& target) {
  const Vec3 z = (target - cam_center).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(z.dot(up)) > 0.99) up = Vec3(0, 1, 0);
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return Pose(R, -R * cam_center);
}

/// Exact multi-view observation set of a ground-truth ellipsoid from
/// cameras on a ring (two elevations) looking at the center.
ObservationSet make_views(const EllipsoidParams& gt, int n_views,
                          double distance, int cameras = 1) {
  std::vector<Observation> obs;
  for (int i = 0; i < n_views; ++i) {
    const double yaw = 2.0 * M_PI * i / n_views;
    const double elev = (i % 2 == 0) ? 0.25 : -0.2;
    const Vec3 dir(std::cos(yaw) * std::cos(elev), std::sin(yaw) * std::cos(elev),
                   std::sin(elev));
    const Pose pose = look_at(gt.center + distance * dir, gt.center);
    Observation o;
    o.camera_id = i % cameras;
    o.frame_id = i;
    o.pose = pose;
    o.ellipse = conic_to_gaussian(project_quadric(gt, pose));
    obs.push_back(o);
  }
  return ObservationSet::make(std::move(obs));
}

}  // namespace

TEST_CASE("init_quadric triangulates two orthogonal views of a sphere") {
  EllipsoidParams gt;  // unit sphere at origin
  std::vector<Observation> obs;
  for (const Vec3 c : {Vec3(0, 0, -5), Vec3(-5, 0, 0)}) {
    Observation o;
    o.pose = look_at(c, Vec3(0, 0, 0));
    o.ellipse = conic_to_gaussian(project_quadric(gt, o.pose));
    obs.push_back(o);
  }
  // sanity-check against the closed-form two-ray midpoint oracle
  const Vec3 ref = oracles::two_ray_midpoint(Vec3(0, 0, -5), Vec3(0, 0, 1),
                                             Vec3(-5, 0, 0), Vec3(1, 0, 0));
  const EllipsoidParams init = init_quadric(ObservationSet::make(obs));
  CHECK((init.center - ref).norm() < 1e-9);
  CHECK(init.center.norm() < 1e-6);
  CHECK(init.semi_axes.minCoeff() > 0);
}

TEST_CASE("init_quadric uses the point centroid when points exist") {
  EllipsoidParams gt;
  auto set = make_views(gt, 2, 5.0);
  set.associated_points = {Vec3(1, 1, 1)};
  set.point_centroid = Vec3(1, 1, 1);
  const EllipsoidParams init = init_quadric(set);
  CHECK((init.center - Vec3(1, 1, 1)).norm() == 0.0);
}

TEST_CASE("init_quadric rejects observations from identical poses") {
  EllipsoidParams gt;
  const Pose pose = look_at(Vec3(0, 0, -5), Vec3(0, 0, 0));
  Observation o;
  o.pose = pose;
  o.ellipse = conic_to_gaussian(project_quadric(gt, pose));
  std::vector<Observation> obs = {o, o};
  CHECK_THROWS_AS(init_quadric(ObservationSet::make(obs)),
                  TriangulationDegenerate);
}

TEST_CASE("residual_proj is zero at ground truth and grows with offset") {
  EllipsoidParams gt;
  gt.semi_axes = Vec3(1.0, 0.8, 1.2);
  const ObservationSet set = make_views(gt, 6, 8.0);

  const ProjectionResiduals at_gt = residual_proj(gt, set);
  CHECK(at_gt.excluded == 0);
  for (size_t i = 0; i < at_gt.values.size(); ++i) {
    CHECK(at_gt.valid[i]);
    CHECK(at_gt.values[i] < 1e-10);
  }

  double prev = 0;
  for (double off : {0.1, 0.2, 0.4, 0.8}) {
    EllipsoidParams moved = gt;
    moved.center += Vec3(off, 0, 0);
    const double sum = residual_proj(moved, set).sum();
    CHECK(sum > prev);
    prev = sum;
  }
}

TEST_CASE("residual_proj mean tracks the injected noise level") {
  EllipsoidParams gt;
  ObservationSet set = make_views(gt, 20, 8.0, 4);
  const double sigma = 0.01;
  Rng rng(42);
  for (auto& o : set.observations) {
    o.ellipse.mu += sigma * Vec2(rng.normal(), rng.normal());
  }
  const double mean =
      residual_proj(gt, set).sum() / static_cast<double>(set.observations.size());
  CHECK(mean > sigma * sigma / 2.0);
  CHECK(mean < 8.0 * sigma * sigma);
}

TEST_CASE("residual_center basics and observation-count weighting") {
  EllipsoidParams gt;
  ObservationSet set = make_views(gt, 4, 6.0);
  SECTION("no points -> flagged absent") {
    CHECK_FALSE(residual_center(gt, set).has_value());
  }
  set.associated_points = {Vec3(0, 0, 0)};
  set.point_centroid = Vec3(0, 0, 0);
  SECTION("zero at agreement") {
    CHECK(residual_center(gt, set)->norm() == 0.0);
  }
  SECTION("reports the offset") {
    EllipsoidParams moved = gt;
    moved.center = Vec3(1, 0, 0);
    CHECK((*residual_center(moved, set) - Vec3(1, 0, 0)).norm() == 0.0);
  }
  SECTION("cost contribution doubles with observation count") {
    EllipsoidParams moved = gt;
    moved.center = Vec3(0.5, 0, 0);
    EstimatorConfig cfg;
    ObservationSet doubled = set;
    doubled.observations.insert(doubled.observations.end(),
                                set.observations.begin(),
                                set.observations.end());
    const double c1 = quadric_cost(moved, set, cfg);
    const double c2 = quadric_cost(moved, doubled, cfg);
    // both the W2 sum and the count-weighted center term double
    CHECK(c2 == Catch::Approx(2.0 * c1).epsilon(1e-9));
  }
}

TEST_CASE("optimize_quadric is a fixed point at ground truth") {
  EllipsoidParams gt;
  gt.semi_axes = Vec3(1.2, 0.9, 0.7);
  const ObservationSet set = make_views(gt, 8, 8.0);
  const OptimizeResult res = optimize_quadric(gt, set);
  CHECK(res.final_cost < 1e-10);
  CHECK(res.iterations <= 1);
  CHECK(res.converged);
  CHECK((res.params.center - gt.center).norm() < 1e-12);
}

TEST_CASE("optimize_quadric recovers a perturbed ellipsoid") {
  Rng rng(2024);
  int recovered = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    EllipsoidParams gt;
    gt.center = Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1, 1));
    gt.semi_axes =
        Vec3(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5));
    gt.rotation = so3_exp(rng.uniform(0, 3) * rng.unit_vector3());
    const ObservationSet set = make_views(gt, 8, rng.uniform(6, 12));

    EllipsoidParams init = gt;
    const double scale = gt.semi_axes.mean();
    init.center += 0.1 * scale * rng.unit_vector3();
    for (int k = 0; k < 3; ++k) {
      init.semi_axes[k] *= 1.0 + 0.1 * (rng.uniform() < 0.5 ? -1 : 1);
    }
    const double init_cost = quadric_cost(init, set, {});
    const OptimizeResult res = optimize_quadric(init, set);
    CHECK(res.final_cost <= init_cost);
    CHECK(res.params.semi_axes.minCoeff() > 0);

    Vec3 got = res.params.semi_axes, want = gt.semi_axes;
    std::sort(got.data(), got.data() + 3);
    std::sort(want.data(), want.data() + 3);
    const bool ok = (res.params.center - gt.center).norm() < 1e-3 &&
                    ((got - want).cwiseQuotient(want)).cwiseAbs().maxCoeff() < 1e-2;
    if (ok) ++recovered;
  }
  CHECK(recovered == trials);
}

TEST_CASE("optimize_quadric requires enough valid observations") {
  EllipsoidParams gt;
  ObservationSet single = make_views(gt, 1, 6.0);
  CHECK_THROWS_AS(optimize_quadric(gt, single), InsufficientObservations);
}

TEST_CASE("behind-camera observations are excluded, not fatal") {
  EllipsoidParams gt;
  ObservationSet set = make_views(gt, 6, 8.0);
  Observation away;
  away.pose = look_at(Vec3(0, 0, -5), Vec3(0, 0, -10));  // facing away
  away.ellipse = set.observations[0].ellipse;
  set.observations.push_back(away);
  const OptimizeResult res = optimize_quadric(gt, set);
  CHECK(res.excluded_observations == 1);
  CHECK(res.final_cost < 1e-10);
}

TEST_CASE("FD jacobian agrees with its half-step recheck") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    EllipsoidParams gt;
    gt.center = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), 0);
    gt.semi_axes =
        Vec3(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5));
    gt.rotation = so3_exp(rng.uniform(0, 1) * rng.unit_vector3());
    ObservationSet set = make_views(gt, 6, 8.0);
    // evaluate off the optimum so residuals are non-trivial
    EllipsoidParams probe = gt;
    probe.center += Vec3(0.1, -0.05, 0.03);
    probe.semi_axes *= 1.07;
    const Eigen::MatrixXd J1 = estimation_jacobian(probe, set, {}, 1e-6);
    const Eigen::MatrixXd J2 = estimation_jacobian(probe, set, {}, 5e-7);
    CHECK((J1 - J2).norm() / std::max(J2.norm(), 1e-12) < 1e-4);
  }
}

TEST_CASE("observation union is flat: camera labels do not matter") {
  EllipsoidParams gt;
  gt.semi_axes = Vec3(1.1, 0.8, 0.9);
  ObservationSet one_cam = make_views(gt, 8, 8.0, 1);
  ObservationSet many_cams = one_cam;
  for (size_t i = 0; i < many_cams.observations.size(); ++i) {
    many_cams.observations[i].camera_id = static_cast<int>(i % 4);
  }
  EllipsoidParams init = gt;
  init.center += Vec3(0.1, 0.1, -0.05);
  const OptimizeResult a = optimize_quadric(init, one_cam);
  const OptimizeResult b = optimize_quadric(init, many_cams);
  CHECK(a.final_cost == b.final_cost);
  CHECK((a.params.center - b.params.center).norm() == 0.0);
  CHECK((a.params.semi_axes - b.params.semi_axes).norm() == 0.0);
}
