#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dslam/filter.hpp"
#include "dslam/grid.hpp"

using namespace dslam;

namespace {

BoolGrid random_grid(int w, int h, double fill, uint64_t seed) {
  BoolGrid g;
  g.geom.width = w;
  g.geom.height = h;
  g.geom.resolution = 0.05;
  g.cells.assign(static_cast<size_t>(w) * h, 0);
  Rng rng(seed);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (rng.uniform() < fill) g.set(r, c, true);
  return g;
}

// O(cells^2) reference for the distance transform: min squared center-to-center
// distance to any occupied cell, saturated at the field cap.
double brute_sq_distance(const BoolGrid& g, int r, int c, double cap) {
  double best = std::numeric_limits<double>::infinity();
  for (int rr = 0; rr < g.geom.height; ++rr)
    for (int cc = 0; cc < g.geom.width; ++cc)
      if (g.occupied(rr, cc)) {
        const double dr = (rr - r) * g.geom.resolution;
        const double dc = (cc - c) * g.geom.resolution;
        best = std::min(best, dr * dr + dc * dc);
      }
  return std::min(best, cap * cap);
}

}  // namespace

TEST_CASE("distance field matches brute force on random grids") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const BoolGrid g = random_grid(40, 30, 0.12, seed);
    const LikelihoodField f = LikelihoodField::from_bool_grid(g, 0.1);
    const double cap = f.cap_distance();
    for (int r = 0; r < 30; ++r)
      for (int c = 0; c < 40; ++c) {
        const double want = brute_sq_distance(g, r, c, cap);
        CHECK(f.sq_distance(r, c) == doctest::Approx(want).epsilon(1e-5));
      }
  }
}

TEST_CASE("distance field saturates at the wide-kernel cap") {
  // sigma 1.0 would allow 3 m; the hard 2 m cap must win.
  BoolGrid g = random_grid(80, 60, 0.0, 9);
  g.set(0, 0, true);
  const LikelihoodField f = LikelihoodField::from_bool_grid(g, 1.0);
  CHECK(f.cap_distance() == doctest::Approx(2.0));
  CHECK(f.sq_distance(59, 79) == doctest::Approx(4.0));
  // Narrow kernel saturates at 3 sigma instead.
  const LikelihoodField n = LikelihoodField::from_bool_grid(g, 0.1);
  CHECK(n.cap_distance() == doctest::Approx(0.3));
  CHECK(n.sq_distance(59, 79) == doctest::Approx(0.09));
  CHECK(n.value(59, 79) == doctest::Approx(std::exp(-4.5)));
}

TEST_CASE("empty map reads the cap everywhere") {
  const BoolGrid g = random_grid(10, 10, 0.0, 1);
  const LikelihoodField f = LikelihoodField::from_bool_grid(g, 0.1);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) CHECK(f.sq_distance(r, c) == doctest::Approx(0.09));
}

TEST_CASE("field values stay in (0, 1] and peak on obstacles") {
  BoolGrid g = random_grid(20, 20, 0.1, 7);
  g.set(4, 4, true);
  const LikelihoodField f = LikelihoodField::from_bool_grid(g, 0.1);
  CHECK(f.value(4, 4) == doctest::Approx(1.0));
  double lo = 1.0;
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) {
      CHECK(f.value(r, c) > 0.0);
      CHECK(f.value(r, c) <= 1.0);
      lo = std::min(lo, f.value(r, c));
    }
  CHECK(lo >= std::exp(-4.5) - 1e-12);
}

TEST_CASE("occupancy-sourced field: unknown cells carry no evidence") {
  GridGeom geom;
  geom.width = 20;
  geom.height = 20;
  geom.resolution = 0.05;
  OccupancyGrid occ(geom);
  occ.add_log_odds(5, 5, 5.0, kLogOddsClamp);    // obstacle
  occ.add_log_odds(5, 6, -2.0, kLogOddsClamp);   // observed free
  const LikelihoodField f = LikelihoodField::from_occupancy(occ, 0.1);

  CHECK(f.known(5, 5));
  CHECK(f.known(5, 6));
  CHECK_FALSE(f.known(15, 15));
  CHECK(f.sq_distance(5, 5) == doctest::Approx(0.0));
  CHECK(f.sq_distance(5, 6) == doctest::Approx(0.05 * 0.05));
  // Never-observed cell scores as distance zero regardless of the obstacle.
  CHECK(f.sq_distance(15, 15) == doctest::Approx(0.0));
  CHECK(f.value(15, 15) == doctest::Approx(1.0));
  // Leaving the grid is not the same as unexplored: the cap applies.
  CHECK(f.sq_distance(-1, 3) == doctest::Approx(0.09));
  CHECK(f.sq_distance_at(-5.0, 0.1) == doctest::Approx(0.09));
  CHECK_FALSE(f.known_at(-5.0, 0.1));
}

TEST_CASE("occupancy threshold picks obstacles") {
  GridGeom geom;
  geom.width = 8;
  geom.height = 8;
  geom.resolution = 0.05;
  OccupancyGrid occ(geom);
  const double l_hi = std::log(0.70 / 0.30);  // p = 0.70 -> obstacle
  const double l_lo = std::log(0.60 / 0.40);  // p = 0.60 -> free
  occ.add_log_odds(2, 2, l_hi, kLogOddsClamp);
  occ.add_log_odds(6, 6, l_lo, kLogOddsClamp);
  const LikelihoodField f = LikelihoodField::from_occupancy(occ, 0.1);
  CHECK(f.sq_distance(2, 2) == doctest::Approx(0.0));
  CHECK(f.sq_distance(6, 6) > 0.0);
}

TEST_CASE("log odds accumulate and clamp") {
  GridGeom geom;
  geom.width = 4;
  geom.height = 4;
  geom.resolution = 0.05;
  OccupancyGrid occ(geom);
  CHECK_FALSE(occ.known(1, 1));
  occ.add_log_odds(1, 1, kLogOddsOcc, kLogOddsClamp);
  CHECK(occ.known(1, 1));
  CHECK(occ.log_odds(1, 1) == doctest::Approx(0.85));
  for (int i = 0; i < 40; ++i) occ.add_log_odds(1, 1, kLogOddsOcc, kLogOddsClamp);
  CHECK(occ.log_odds(1, 1) == doctest::Approx(10.0));
  for (int i = 0; i < 100; ++i) occ.add_log_odds(2, 2, kLogOddsFree, kLogOddsClamp);
  CHECK(occ.log_odds(2, 2) == doctest::Approx(-10.0));
  CHECK(occ.probability(1, 1) > 0.99);
  CHECK(occ.probability(2, 2) < 0.01);
}

TEST_CASE("grid geometry indexing") {
  GridGeom geom;
  geom.width = 10;
  geom.height = 6;
  geom.resolution = 0.5;
  CHECK(geom.col_of(0.0) == 0);
  CHECK(geom.col_of(0.49) == 0);
  CHECK(geom.col_of(0.5) == 1);
  CHECK(geom.col_of(-0.01) == -1);
  CHECK(geom.row_of(2.9) == 5);
  CHECK(geom.contains_point(0.0, 0.0));
  CHECK(geom.contains_point(4.99, 2.99));
  CHECK_FALSE(geom.contains_point(5.0, 1.0));
  CHECK_FALSE(geom.contains_point(1.0, 3.0));
  CHECK_FALSE(geom.contains_point(-0.01, 1.0));
  CHECK(geom.cell_center_x(0) == doctest::Approx(0.25));
  CHECK(geom.cell_center_y(5) == doctest::Approx(2.75));
}

TEST_CASE("traversal covers a straight horizontal segment") {
  GridGeom geom;
  geom.width = 20;
  geom.height = 20;
  geom.resolution = 0.05;
  const auto cells = traverse_cells(geom, {0.125, 0.125}, {0.375, 0.125});
  REQUIRE(cells.size() == 6);
  for (size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].first == 2);
    CHECK(cells[i].second == static_cast<int>(2 + i));
  }
}

TEST_CASE("traversal endpoints and adjacency") {
  GridGeom geom;
  geom.width = 20;
  geom.height = 20;
  geom.resolution = 0.05;
  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const Vec2 a{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    const Vec2 b{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    const auto cells = traverse_cells(geom, a, b);
    REQUIRE_FALSE(cells.empty());
    CHECK(cells.front().first == geom.row_of(a.y));
    CHECK(cells.front().second == geom.col_of(a.x));
    CHECK(cells.back().first == geom.row_of(b.y));
    CHECK(cells.back().second == geom.col_of(b.x));
    std::set<std::pair<int, int>> seen;
    for (size_t i = 0; i < cells.size(); ++i) {
      CHECK(geom.contains(cells[i].first, cells[i].second));
      CHECK(seen.insert(cells[i]).second);  // no repeats
      if (i > 0) {
        const int dr = std::abs(cells[i].first - cells[i - 1].first);
        const int dc = std::abs(cells[i].second - cells[i - 1].second);
        CHECK(dr + dc == 1);  // one axis per step
      }
    }
  }
}

TEST_CASE("traversal degenerate and clipped cases") {
  GridGeom geom;
  geom.width = 10;
  geom.height = 10;
  geom.resolution = 0.1;
  const auto point = traverse_cells(geom, {0.55, 0.55}, {0.55, 0.55});
  REQUIRE(point.size() == 1);
  CHECK(point[0] == std::pair<int, int>(5, 5));

  // Segment leaving the grid keeps only in-grid cells.
  const auto clipped = traverse_cells(geom, {0.05, 0.05}, {5.0, 0.05});
  for (const auto& rc : clipped) CHECK(geom.contains(rc.first, rc.second));
  CHECK(clipped.size() == 10);

  // Entirely outside.
  CHECK(traverse_cells(geom, {-2.0, -2.0}, {-1.0, -2.0}).empty());
}
