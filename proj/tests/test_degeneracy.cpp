#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "dslam/degeneracy.hpp"
#include "dslam/world.hpp"

using namespace dslam;

namespace {

std::vector<Pose> random_swarm(int n, Rng& rng, double spread = 0.4) {
  std::vector<Pose> out(n);
  const double cx = rng.uniform(2.0, 8.0), cy = rng.uniform(2.0, 8.0);
  for (auto& p : out) {
    p.x = cx + rng.gauss(0.0, spread);
    p.y = cy + rng.gauss(0.0, spread);
    p.theta = rng.uniform(-kPi, kPi);
  }
  return out;
}

}  // namespace

TEST_CASE("centroid basics") {
  CHECK(centroid({{0, 0, 0}, {2, 0, 1}}).x == doctest::Approx(1.0));
  CHECK(centroid({{0, 0, 0}, {2, 0, 1}}).y == doctest::Approx(0.0));
  const Vec2 single = centroid({{3.5, -1.25, 0.7}});
  CHECK(single.x == doctest::Approx(3.5));
  CHECK(single.y == doctest::Approx(-1.25));
  CHECK_THROWS(centroid({}));

  Rng rng(1);
  std::vector<Pose> poses = random_swarm(30, rng);
  const Vec2 g = centroid(poses);
  std::vector<Pose> moved = poses;
  for (auto& p : moved) {
    p.x += 1.5;
    p.y -= 0.75;
  }
  const Vec2 gm = centroid(moved);
  CHECK(gm.x == doctest::Approx(g.x + 1.5));
  CHECK(gm.y == doctest::Approx(g.y - 0.75));
}

TEST_CASE("swarm covariance matches a two-pass oracle") {
  std::vector<Pose> same(5, Pose{1.0, 2.0, 0.3});
  const Mat2 zero = swarm_covariance(same);
  CHECK(zero.xx == doctest::Approx(0.0));
  CHECK(zero.xy == doctest::Approx(0.0));
  CHECK(zero.yy == doctest::Approx(0.0));

  const Mat2 axis = swarm_covariance({{-1, 0, 0}, {1, 0, 0}});
  CHECK(axis.xx == doctest::Approx(2.0));
  CHECK(axis.xy == doctest::Approx(0.0));
  CHECK(axis.yy == doctest::Approx(0.0));

  CHECK_THROWS(swarm_covariance({{1, 1, 0}}));

  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    const std::vector<Pose> poses = random_swarm(30, rng);
    double mx = 0, my = 0;
    for (const auto& p : poses) {
      mx += p.x;
      my += p.y;
    }
    mx /= poses.size();
    my /= poses.size();
    double xx = 0, xy = 0, yy = 0;
    for (const auto& p : poses) {
      xx += (p.x - mx) * (p.x - mx);
      xy += (p.x - mx) * (p.y - my);
      yy += (p.y - my) * (p.y - my);
    }
    const double n1 = poses.size() - 1.0;
    const Mat2 got = swarm_covariance(poses);
    CHECK(got.xx == doctest::Approx(xx / n1).epsilon(1e-12));
    CHECK(got.xy == doctest::Approx(xy / n1).epsilon(1e-12));
    CHECK(got.yy == doctest::Approx(yy / n1).epsilon(1e-12));
  }
}

TEST_CASE("mahalanobis distance") {
  const Mat2 eye{1.0, 0.0, 1.0};
  CHECK(mahalanobis({0, 0}, {3, 4}, eye) == doctest::Approx(5.0));
  CHECK(mahalanobis({2, -1}, {2, -1}, eye) == doctest::Approx(0.0));
  const Mat2 aniso{4.0, 0.0, 1.0};
  CHECK(mahalanobis({2, 0}, {0, 0}, aniso) == doctest::Approx(1.0));

  // Singular input is regularized, not rejected.
  const Mat2 flat{0.0, 0.0, 0.0};
  CHECK(mahalanobis({1e-6, 0}, {0, 0}, flat) > 0.0);
  const Mat2 negative{-1.0, 0.0, -1.0};
  CHECK_THROWS(mahalanobis({1, 0}, {0, 0}, negative));
}

TEST_CASE("fusion endpoints, interpolation and rigidity") {
  Rng rng(3);
  const std::vector<Pose> p_z = random_swarm(30, rng);
  const Vec2 g_z = centroid(p_z);
  const Vec2 g_u{g_z.x + 1.2, g_z.y - 0.8};

  const FusionResult at0 = fuse(p_z, g_u, 0.0);
  for (size_t i = 0; i < p_z.size(); ++i) {
    CHECK(at0.p_c[i].x == p_z[i].x);
    CHECK(at0.p_c[i].y == p_z[i].y);
    CHECK(at0.p_c[i].theta == p_z[i].theta);
  }

  const FusionResult at1 = fuse(p_z, g_u, 1.0);
  const Vec2 c1 = centroid(at1.p_c);
  CHECK(c1.x == doctest::Approx(g_u.x));
  CHECK(c1.y == doctest::Approx(g_u.y));

  const FusionResult mid = fuse({{1, 0, 0.5}, {1, 0, -0.5}}, {3, 2}, 0.5);
  CHECK(mid.g_c.x == doctest::Approx(2.0));
  CHECK(mid.g_c.y == doctest::Approx(1.0));
  CHECK(mid.shift.x == doctest::Approx(1.0));
  CHECK(mid.shift.y == doctest::Approx(1.0));

  double prev_dist = -1.0;
  for (double a : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const FusionResult f = fuse(p_z, g_u, a);
    // Centroid traces the straight segment from g_z to g_u.
    CHECK(f.g_c.x == doctest::Approx((1 - a) * g_z.x + a * g_u.x));
    CHECK(f.g_c.y == doctest::Approx((1 - a) * g_z.y + a * g_u.y));
    const double d = (f.g_c - g_z).norm();
    CHECK(d > prev_dist);
    prev_dist = d;
    // Shift definition and rigidity.
    CHECK(f.shift.x == doctest::Approx(a * (g_u.x - g_z.x)));
    CHECK(f.shift.y == doctest::Approx(a * (g_u.y - g_z.y)));
    for (size_t i = 0; i < p_z.size(); ++i) {
      CHECK(f.p_c[i].theta == p_z[i].theta);
      for (size_t j = i + 1; j < p_z.size(); j += 7) {
        const double before = std::hypot(p_z[i].x - p_z[j].x, p_z[i].y - p_z[j].y);
        const double after = std::hypot(f.p_c[i].x - f.p_c[j].x, f.p_c[i].y - f.p_c[j].y);
        CHECK(after == doctest::Approx(before).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("interpolated centroid minimizes the weighted two-anchor objective") {
  Rng rng(4);
  for (int k = 0; k < 5; ++k) {
    const std::vector<Pose> p_z = random_swarm(30, rng);
    const Vec2 g_z = centroid(p_z);
    const Vec2 g_u{g_z.x + rng.uniform(-2.0, 2.0), g_z.y + rng.uniform(-2.0, 2.0)};
    const double a = rng.uniform(0.05, 0.95);
    const Vec2 g_c = fuse(p_z, g_u, a).g_c;

    auto objective = [&](double x, double y) {
      const double dz = (x - g_z.x) * (x - g_z.x) + (y - g_z.y) * (y - g_z.y);
      const double du = (x - g_u.x) * (x - g_u.x) + (y - g_u.y) * (y - g_u.y);
      return (1.0 - a) * dz + a * du;
    };
    const double at_solution = objective(g_c.x, g_c.y);
    for (int gx = 0; gx <= 100; ++gx)
      for (int gy = 0; gy <= 100; ++gy) {
        const double x = g_z.x - 2.5 + 0.05 * gx + 0.5 * (g_u.x - g_z.x);
        const double y = g_z.y - 2.5 + 0.05 * gy + 0.5 * (g_u.y - g_z.y);
        CHECK(objective(x, y) >= at_solution - 1e-9);
      }
  }
}

TEST_CASE("information-weighted fusion of equal covariances is the interpolation") {
  // With matching covariance the precision-weighted mean collapses to
  // (1-a) g_z + a g_u, which is exactly what fuse actuates.
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    // Random SPD matrix S = A A^T + eps I.
    const double a11 = rng.gauss(), a12 = rng.gauss(), a21 = rng.gauss(), a22 = rng.gauss();
    const Mat2 S{a11 * a11 + a12 * a12 + 0.1, a11 * a21 + a12 * a22,
                 a21 * a21 + a22 * a22 + 0.1};
    const Mat2 Sinv = S.inverse();
    const double a = rng.uniform(0.0, 1.0);
    const Vec2 g_z{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    const Vec2 g_u{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};

    // Precision form: Sc^-1 = (1-a) Sz^-1 + a Su^-1 with Sz == Su == S.
    const Mat2 Sc_inv{(1 - a) * Sinv.xx + a * Sinv.xx, (1 - a) * Sinv.xy + a * Sinv.xy,
                      (1 - a) * Sinv.yy + a * Sinv.yy};
    const Mat2 Sc = Sc_inv.inverse();
    const double bx = (1 - a) * (Sinv.xx * g_z.x + Sinv.xy * g_z.y) +
                      a * (Sinv.xx * g_u.x + Sinv.xy * g_u.y);
    const double by = (1 - a) * (Sinv.xy * g_z.x + Sinv.yy * g_z.y) +
                      a * (Sinv.xy * g_u.x + Sinv.yy * g_u.y);
    const Vec2 g_c{Sc.xx * bx + Sc.xy * by, Sc.xy * bx + Sc.yy * by};

    CHECK(g_c.x == doctest::Approx((1 - a) * g_z.x + a * g_u.x).epsilon(1e-9));
    CHECK(g_c.y == doctest::Approx((1 - a) * g_z.y + a * g_u.y).epsilon(1e-9));
  }
}

TEST_CASE("selection keeps Z on ties and switches on strict dominance") {
  // Notched walls so that an axial displacement is visible to the score.
  WorldGenParams p;
  p.corridor_len = 24.0;
  p.corridor_features = 6;
  const WorldModel world = generate_world("corridor", p, 7);
  const LikelihoodField field = LikelihoodField::from_bool_grid(world.grid, 0.1);
  const Rect region = world.degenerate_regions[0];
  const Pose truth{0.5 * (region.x0 + region.x1), 0.5 * (region.y0 + region.y1), 0.0};
  const LidarScan scan = raycast(world, truth, 180, 2.0 * kPi, 8.0);

  Rng rng(6);
  std::vector<Pose> good(30), drifted(30);
  for (int i = 0; i < 30; ++i) {
    good[i] = {truth.x + rng.gauss(0.0, 0.03), truth.y + rng.gauss(0.0, 0.03),
               truth.theta + rng.gauss(0.0, 0.01)};
    drifted[i] = good[i];
    drifted[i].x += 0.5;
  }
  std::vector<double> scores(30);
  for (int i = 0; i < 30; ++i) scores[i] = scan_likelihood(scan, field, drifted[i]);

  // a = 0: fused poses equal p_z, scores tie, conservative choice is Z.
  const FusionResult id = fuse(drifted, centroid(good), 0.0);
  const Selection tie = select_distribution(drifted, scores, id, scan, field);
  CHECK(tie.choice == 'Z');

  // Full pull moves the drifted set back onto the map: C must win.
  const FusionResult pulled = fuse(drifted, centroid(good), 1.0);
  const Selection sw = select_distribution(drifted, scores, pulled, scan, field);
  CHECK(sw.choice == 'C');
  CHECK(sw.poses.size() == pulled.p_c.size());
  for (int i = 0; i < 30; ++i) CHECK(sw.poses[i].x == pulled.p_c[i].x);

  // Selection is a max: never below the best pure-Z score.
  double best_z = 0.0;
  for (double s : scores) best_z = std::max(best_z, s);
  CHECK(sw.best_score >= best_z - 1e-12);
  CHECK(sw.best_score == doctest::Approx(sw.scores[sw.best_index]));
}

TEST_CASE("scripted corridor drift: fused set wins almost every step") {
  WorldGenParams p;
  p.corridor_len = 24.0;
  p.corridor_features = 6;
  const WorldModel world = generate_world("corridor", p, 7);
  const LikelihoodField field = LikelihoodField::from_bool_grid(world.grid, 0.1);
  const Rect region = world.degenerate_regions[0];
  const double yc = 0.5 * (region.y0 + region.y1);

  Rng rng(7);
  int c_wins = 0, steps = 0;
  for (double x = region.x0 + 0.5; x <= region.x1 - 0.5; x += 0.25) {
    ++steps;
    const Pose truth{x, yc, 0.0};
    const LidarScan scan = raycast(world, truth, 180, 2.0 * kPi, 8.0);
    std::vector<Pose> p_u(30), p_z(30);
    for (int i = 0; i < 30; ++i) {
      p_u[i] = {truth.x + rng.gauss(0.0, 0.05), truth.y + rng.gauss(0.0, 0.05),
                rng.gauss(0.0, 0.02)};
      p_z[i] = {truth.x + 0.5 + rng.gauss(0.0, 0.03), truth.y + rng.gauss(0.0, 0.02),
                rng.gauss(0.0, 0.01)};
    }
    std::vector<double> scores(30);
    for (int i = 0; i < 30; ++i) scores[i] = scan_likelihood(scan, field, p_z[i]);
    // Factor set from the known injected drift: full compensation.
    const FusionResult f = fuse(p_z, centroid(p_u), 1.0);
    const Selection sel = select_distribution(p_z, scores, f, scan, field);
    if (sel.choice == 'C') ++c_wins;
  }
  CHECK(steps >= 50);
  CHECK(static_cast<double>(c_wins) / steps >= 0.8);
}

TEST_CASE("curvature detector: isotropic bowl reads near zero") {
  // Millimeter cells make the sampled distance field effectively smooth at
  // the detector's finite-difference step.
  BoolGrid g;
  g.geom.width = 1200;
  g.geom.height = 1200;
  g.geom.resolution = 0.002;
  g.cells.assign(1200 * 1200, 0);
  g.set(600, 600, true);
  const LikelihoodField field = LikelihoodField::from_bool_grid(g, 1.0);

  const double ox = g.geom.cell_center_x(600), oy = g.geom.cell_center_y(600);
  const Pose pose{ox - 1.0, oy, 0.0};
  LidarScan scan;
  scan.max_range = 8.0;
  scan.angles = {0.0};
  scan.ranges = {1.0};  // endpoint exactly on the obstacle

  const AnalyticDetectorReport rep = hessian_detector(pose, scan, field);
  CHECK(rep.factor >= 0.0);
  CHECK(rep.factor <= 0.05);
}

TEST_CASE("curvature detector: flat objective reports full degeneracy") {
  const AnalyticDetectorReport empty = hessian_detector({1, 1, 0}, LidarScan{}, LikelihoodField{});
  CHECK(empty.factor == doctest::Approx(1.0));

  // A field that knows nothing scores 1 everywhere: zero curvature.
  GridGeom geom;
  geom.width = 100;
  geom.height = 100;
  geom.resolution = 0.05;
  const OccupancyGrid blank(geom);
  const LikelihoodField unknown = LikelihoodField::from_occupancy(blank, 0.1);
  LidarScan scan;
  scan.max_range = 8.0;
  scan.angles = {0.0, 1.0, 2.0};
  scan.ranges = {1.0, 1.5, 2.0};
  const AnalyticDetectorReport flat = hessian_detector({2.5, 2.5, 0}, scan, unknown);
  CHECK(flat.factor == doctest::Approx(1.0));
}

TEST_CASE("curvature detector separates corridor from room") {
  WorldGenParams p;
  p.corridor_len = 24.0;
  const WorldModel cor = generate_world("corridor", p, 7);
  const LikelihoodField cor_field = LikelihoodField::from_bool_grid(cor.grid, 0.1);
  const Rect region = cor.degenerate_regions[0];
  const Pose mid{0.5 * (region.x0 + region.x1), 0.5 * (region.y0 + region.y1), 0.0};
  const LidarScan cor_scan = raycast(cor, mid, 180, 2.0 * kPi, 8.0);
  const AnalyticDetectorReport in_corridor = hessian_detector(mid, cor_scan, cor_field);

  const WorldModel room = generate_world("room", p, 7);
  const LikelihoodField room_field = LikelihoodField::from_bool_grid(room.grid, 0.1);
  const Pose center{5.0, 5.0, 0.0};
  const LidarScan room_scan = raycast(room, center, 180, 2.0 * kPi, 8.0);
  const AnalyticDetectorReport in_room = hessian_detector(center, room_scan, room_field);

  CHECK(in_corridor.factor > in_room.factor);
  CHECK(in_corridor.factor > 0.75);
  CHECK(in_room.factor < 0.75);

  // Report structure: symmetric hessian, ascending eigenvalues, bounded factor.
  for (const auto* rep : {&in_corridor, &in_room}) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(rep->hessian[i][j] == doctest::Approx(rep->hessian[j][i]));
    CHECK(rep->eigenvalues[0] <= rep->eigenvalues[1]);
    CHECK(rep->eigenvalues[1] <= rep->eigenvalues[2]);
    CHECK(rep->factor >= 0.0);
    CHECK(rep->factor <= 1.0);
  }
}
