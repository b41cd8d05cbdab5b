#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "dslam/world.hpp"

using namespace dslam;

namespace {

WorldModel free_space_world(double w, double h, double res) {
  WorldModel world;
  world.name = "free";
  world.grid.geom.width = static_cast<int>(std::lround(w / res));
  world.grid.geom.height = static_cast<int>(std::lround(h / res));
  world.grid.geom.resolution = res;
  world.grid.cells.assign(static_cast<size_t>(world.grid.geom.width) * world.grid.geom.height, 0);
  return world;
}

// Fine ray march: first step whose sample point lies in an occupied cell.
double march_range(const WorldModel& world, const Pose& pose, double angle, double max_range,
                   double step) {
  const double a = pose.theta + angle;
  const double cx = std::cos(a), cy = std::sin(a);
  for (double t = step; t <= max_range; t += step) {
    const double x = pose.x + t * cx;
    const double y = pose.y + t * cy;
    if (!world.grid.geom.contains_point(x, y)) return max_range;
    if (world.grid.occupied_at(x, y)) return t;
  }
  return max_range;
}

bool grids_equal(const BoolGrid& a, const BoolGrid& b) {
  return a.geom.width == b.geom.width && a.geom.height == b.geom.height &&
         a.geom.resolution == b.geom.resolution && a.cells == b.cells;
}

}  // namespace

TEST_CASE("generators are deterministic in (kind, params, seed)") {
  WorldGenParams p;
  for (const char* kind : {"room", "corridor", "mixed"}) {
    const WorldModel a = generate_world(kind, p, 5);
    const WorldModel b = generate_world(kind, p, 5);
    CHECK(a.name == b.name);
    CHECK(grids_equal(a.grid, b.grid));
    REQUIRE(a.waypoints.size() == b.waypoints.size());
    for (size_t i = 0; i < a.waypoints.size(); ++i) {
      CHECK(a.waypoints[i].x == b.waypoints[i].x);
      CHECK(a.waypoints[i].y == b.waypoints[i].y);
    }
    const WorldModel c = generate_world(kind, p, 6);
    if (std::string(kind) == "room") CHECK_FALSE(grids_equal(a.grid, c.grid));
  }
}

TEST_CASE("generated worlds have sane structure") {
  WorldGenParams p;
  const WorldModel room = generate_world("room", p, 3);
  CHECK(room.degenerate_regions.empty());
  CHECK(room.waypoints.size() >= 4);

  const WorldModel cor = generate_world("corridor", p, 3);
  REQUIRE(cor.degenerate_regions.size() == 1);
  const Rect r = cor.degenerate_regions[0];
  CHECK(r.x0 > 0.0);
  CHECK(r.x1 < p.corridor_len);
  CHECK(r.x1 > r.x0);
  CHECK(cor.waypoints.size() >= 2);

  const WorldModel mix = generate_world("mixed", p, 3);
  CHECK(mix.degenerate_regions.size() >= 1);
  CHECK(mix.waypoints.size() >= 4);

  for (const WorldModel* w : {&room, &cor, &mix})
    for (const Vec2& wp : w->waypoints) {
      CHECK(w->grid.geom.contains_point(wp.x, wp.y));
      CHECK_FALSE(w->grid.occupied_at(wp.x, wp.y));
    }

  CHECK_THROWS(generate_world("volcano", p, 1));
}

TEST_CASE("degenerate region labels positions, boundary inclusive") {
  WorldGenParams p;
  const WorldModel cor = generate_world("corridor", p, 3);
  const Rect r = cor.degenerate_regions[0];
  const double yc = 0.5 * (r.y0 + r.y1);
  CHECK(gt_degenerate(cor, {0.5 * (r.x0 + r.x1), yc, 0.0}));
  CHECK(gt_degenerate(cor, {r.x0, yc, 1.0}));
  CHECK(gt_degenerate(cor, {r.x1, yc, 0.0}));
  CHECK_FALSE(gt_degenerate(cor, {r.x0 - 0.01, yc, 0.0}));
  CHECK_FALSE(gt_degenerate(cor, {r.x1 + 0.01, yc, 0.0}));
}

TEST_CASE("raycast beam layout") {
  const WorldModel world = free_space_world(10.0, 10.0, 0.05);
  const Pose pose{5.0, 5.0, 0.3};

  const LidarScan full = raycast(world, pose, 180, 2.0 * kPi, 8.0);
  REQUIRE(full.size() == 180);
  CHECK(full.angles[0] == doctest::Approx(-kPi));
  CHECK(full.angles[1] - full.angles[0] == doctest::Approx(2.0 * kPi / 180));
  // Full circle: no duplicate beam at +pi.
  CHECK(full.angles.back() == doctest::Approx(kPi - 2.0 * kPi / 180));

  const LidarScan sector = raycast(world, pose, 5, kPi / 2, 8.0);
  REQUIRE(sector.size() == 5);
  CHECK(sector.angles.front() == doctest::Approx(-kPi / 4));
  CHECK(sector.angles.back() == doctest::Approx(kPi / 4));
  CHECK(sector.angles[2] == doctest::Approx(0.0));

  for (double r : full.ranges) CHECK(r == doctest::Approx(8.0));  // nothing to hit
  CHECK_THROWS(raycast(world, {20.0, 5.0, 0.0}, 10, 2.0 * kPi, 8.0));
}

TEST_CASE("raycast hits a known wall at the right distance") {
  WorldModel world = free_space_world(10.0, 10.0, 0.05);
  // Vertical wall occupying x in [7.0, 7.05).
  for (int r = 0; r < world.grid.geom.height; ++r) world.grid.set(r, 140, true);
  const Pose pose{2.0, 5.0, 0.0};
  const LidarScan scan = raycast(world, pose, 1, 0.0, 8.0);
  REQUIRE(scan.size() == 1);
  CHECK(scan.angles[0] == doctest::Approx(0.0));
  CHECK(scan.ranges[0] == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("raycast agrees with a fine ray march") {
  WorldGenParams p;
  const WorldModel world = generate_world("room", p, 8);
  Rng rng(21);
  int checked = 0, grazing = 0;
  while (checked < 8) {
    const Pose pose{rng.uniform(1.0, 9.0), rng.uniform(1.0, 9.0), rng.uniform(-kPi, kPi)};
    if (world.grid.occupied_at(pose.x, pose.y)) continue;
    ++checked;
    const LidarScan scan = raycast(world, pose, 72, 2.0 * kPi, 8.0);
    for (int i = 0; i < scan.size(); ++i) {
      const double ref = march_range(world, pose, scan.angles[i], 8.0, 0.0025);
      // The march can only overshoot the true first crossing, never undershoot.
      CHECK(scan.ranges[i] <= ref + 1e-9);
      if (scan.ranges[i] >= ref - 0.08) continue;
      // The ray clipped a cell sliver the march stepped over. Rare, and the
      // claimed hit must still sit on an occupied cell's boundary.
      ++grazing;
      const double a = pose.theta + scan.angles[i];
      const double hx = pose.x + scan.ranges[i] * std::cos(a);
      const double hy = pose.y + scan.ranges[i] * std::sin(a);
      double best = 1e9;
      for (int r = 0; r < world.grid.geom.height; ++r)
        for (int c = 0; c < world.grid.geom.width; ++c)
          if (world.grid.occupied(r, c)) {
            const double dx = world.grid.geom.cell_center_x(c) - hx;
            const double dy = world.grid.geom.cell_center_y(r) - hy;
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
          }
      CHECK(best <= 0.05);
    }
  }
  CHECK(grazing <= 5);  // 576 beams; corner grazing is measure-zero geometry
}

TEST_CASE("adding an obstacle never lengthens any beam") {
  WorldGenParams p;
  WorldModel world = generate_world("room", p, 9);
  const Pose pose{5.0, 5.0, 0.0};
  const LidarScan before = raycast(world, pose, 90, 2.0 * kPi, 8.0);
  for (int r = 60; r < 70; ++r)
    for (int c = 60; c < 70; ++c) world.grid.set(r, c, true);
  const LidarScan after = raycast(world, pose, 90, 2.0 * kPi, 8.0);
  for (int i = 0; i < before.size(); ++i) CHECK(after.ranges[i] <= before.ranges[i] + 1e-12);
}

TEST_CASE("simulated scan noise model") {
  WorldGenParams p;
  const WorldModel world = generate_world("room", p, 4);
  const Pose pose{5.0, 5.0, 0.7};

  LidarSpec spec;
  spec.n_beams = 120;
  spec.range_sigma = 0.0;
  Rng rng(3);
  const LidarScan clean = simulate_scan(world, pose, spec, rng);
  const LidarScan ref = raycast(world, pose, spec.n_beams, spec.fov, spec.max_range);
  for (int i = 0; i < clean.size(); ++i) CHECK(clean.ranges[i] == doctest::Approx(ref.ranges[i]));

  spec.range_sigma = 0.05;
  Rng rng2(3);
  const LidarScan noisy = simulate_scan(world, pose, spec, rng2);
  int hits = 0;
  for (int i = 0; i < noisy.size(); ++i) {
    CHECK(noisy.ranges[i] > 0.0);
    CHECK(noisy.ranges[i] <= spec.max_range);
    if (ref.ranges[i] >= spec.max_range) {
      CHECK(noisy.ranges[i] == doctest::Approx(spec.max_range));  // no-return beams stay clean
    } else {
      if (noisy.ranges[i] != ref.ranges[i]) ++hits;
    }
  }
  CHECK(hits > 50);

  Rng ra(77), rb(77);
  const LidarScan s1 = simulate_scan(world, pose, spec, ra);
  const LidarScan s2 = simulate_scan(world, pose, spec, rb);
  CHECK(s1.ranges == s2.ranges);
}

TEST_CASE("robot kinematics: line, spin, arc") {
  const WorldModel world = free_space_world(10.0, 10.0, 0.05);
  GroundTruthState s;
  s.pose = {2.0, 2.0, 0.0};

  const GroundTruthState line = step_robot(world, s, 1.0, 0.0, 1.0);
  CHECK(line.pose.x == doctest::Approx(3.0));
  CHECK(line.pose.y == doctest::Approx(2.0));
  CHECK(line.pose.theta == doctest::Approx(0.0));
  CHECK(line.time == doctest::Approx(1.0));

  const GroundTruthState spin = step_robot(world, s, 0.0, kPi / 2, 1.0);
  CHECK(spin.pose.x == doctest::Approx(2.0));
  CHECK(spin.pose.y == doctest::Approx(2.0));
  CHECK(spin.pose.theta == doctest::Approx(kPi / 2));

  // Exact arc of radius v/omega.
  const GroundTruthState arc = step_robot(world, s, 1.0, kPi / 2, 1.0);
  const double R = 1.0 / (kPi / 2);
  CHECK(arc.pose.x == doctest::Approx(2.0 + R));
  CHECK(arc.pose.y == doctest::Approx(2.0 + R));
  CHECK(arc.pose.theta == doctest::Approx(kPi / 2));

  CHECK_THROWS(step_robot(world, s, 1.0, 0.0, 0.0));
}

TEST_CASE("robot stops at walls but keeps turning") {
  WorldModel world = free_space_world(10.0, 10.0, 0.05);
  for (int r = 0; r < world.grid.geom.height; ++r) world.grid.set(r, 60, true);
  GroundTruthState s;
  s.pose = {2.9, 5.0, 0.0};  // wall starts at x = 3.0
  const GroundTruthState hit = step_robot(world, s, 1.0, 0.3, 1.0);
  CHECK(hit.pose.x == doctest::Approx(2.9));
  CHECK(hit.pose.y == doctest::Approx(5.0));
  CHECK(hit.pose.theta == doctest::Approx(0.3));
  CHECK(hit.time == doctest::Approx(1.0));
}

TEST_CASE("odometry decomposition recomposes the motion") {
  GroundTruthState prev, cur;
  prev.pose = {1.0, 1.0, 0.3};
  const double rot1 = 0.2, trans = 0.7, rot2 = -0.1;
  cur.pose.x = prev.pose.x + trans * std::cos(prev.pose.theta + rot1);
  cur.pose.y = prev.pose.y + trans * std::sin(prev.pose.theta + rot1);
  cur.pose.theta = normalize_angle(prev.pose.theta + rot1 + rot2);

  Rng rng(1);
  const OdometryReading u = odometry_from_motion(prev, cur, OdomNoise::zero(), rng);
  CHECK(u.d_rot1 == doctest::Approx(rot1));
  CHECK(u.d_trans == doctest::Approx(trans));
  CHECK(u.d_rot2 == doctest::Approx(rot2));

  Rng rng2(2);
  const OdometryReading still = odometry_from_motion(prev, prev, OdomNoise::zero(), rng2);
  CHECK(still.d_rot1 == doctest::Approx(0.0));
  CHECK(still.d_trans == doctest::Approx(0.0));
  CHECK(still.d_rot2 == doctest::Approx(0.0));
}

TEST_CASE("odometry consumes exactly three gaussian draws") {
  GroundTruthState prev, cur;
  prev.pose = {1.0, 1.0, 0.3};
  cur.pose = {1.5, 1.2, 0.4};
  OdomNoise noise;
  Rng used(42);
  (void)odometry_from_motion(prev, cur, noise, used);
  Rng ref(42);
  (void)ref.gauss();
  (void)ref.gauss();
  (void)ref.gauss();
  for (int i = 0; i < 5; ++i) CHECK(used.gauss() == doctest::Approx(ref.gauss()));
}

TEST_CASE("odometry noise scales match the alpha model") {
  GroundTruthState prev, cur;
  prev.pose = {2.0, 2.0, 0.1};
  const double rot1 = 0.1, trans = 0.5, rot2 = -0.05;
  cur.pose.x = prev.pose.x + trans * std::cos(prev.pose.theta + rot1);
  cur.pose.y = prev.pose.y + trans * std::sin(prev.pose.theta + rot1);
  cur.pose.theta = normalize_angle(prev.pose.theta + rot1 + rot2);
  OdomNoise noise;  // defaults

  const int n = 20000;
  Rng rng(5);
  double sum_t = 0.0, sum_t2 = 0.0, sum_r1 = 0.0, sum_r12 = 0.0;
  for (int i = 0; i < n; ++i) {
    const OdometryReading u = odometry_from_motion(prev, cur, noise, rng);
    sum_t += u.d_trans;
    sum_t2 += u.d_trans * u.d_trans;
    sum_r1 += u.d_rot1;
    sum_r12 += u.d_rot1 * u.d_rot1;
  }
  const double mean_t = sum_t / n;
  const double var_t = sum_t2 / n - mean_t * mean_t;
  const double mean_r1 = sum_r1 / n;
  const double var_r1 = sum_r12 / n - mean_r1 * mean_r1;

  const double want_var_t = noise.a3 * trans * trans + noise.a4 * (rot1 * rot1 + rot2 * rot2);
  const double want_var_r1 = noise.a1 * rot1 * rot1 + noise.a2 * trans * trans;
  CHECK(mean_t == doctest::Approx(trans).epsilon(0.02));
  CHECK(var_t == doctest::Approx(want_var_t).epsilon(0.1));
  CHECK(mean_r1 == doctest::Approx(rot1).epsilon(0.05));
  CHECK(var_r1 == doctest::Approx(want_var_r1).epsilon(0.1));
}

TEST_CASE("world files round trip") {
  WorldGenParams p;
  p.corridor_features = 3;
  const WorldModel w = generate_world("corridor", p, 12);
  const std::string path = "world_roundtrip.json";
  save_world(w, path);
  const WorldModel r = load_world(path);
  CHECK(r.name == w.name);
  CHECK(grids_equal(r.grid, w.grid));
  REQUIRE(r.waypoints.size() == w.waypoints.size());
  for (size_t i = 0; i < w.waypoints.size(); ++i) {
    CHECK(r.waypoints[i].x == doctest::Approx(w.waypoints[i].x));
    CHECK(r.waypoints[i].y == doctest::Approx(w.waypoints[i].y));
  }
  REQUIRE(r.degenerate_regions.size() == w.degenerate_regions.size());
  CHECK(r.degenerate_regions[0].x0 == doctest::Approx(w.degenerate_regions[0].x0));
  CHECK(r.degenerate_regions[0].y1 == doctest::Approx(w.degenerate_regions[0].y1));
  std::remove(path.c_str());
  CHECK_THROWS(load_world("does_not_exist.json"));
}
