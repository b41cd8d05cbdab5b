#pragma once

#include <cstdint>
#include <vector>

#include "dslam/common.hpp"

namespace dslam {

/// Geometry shared by all grid layers: cell (r, c) covers
/// x in [origin.x + c*res, origin.x + (c+1)*res) and the same for y with r.
struct GridGeom {
  int width = 0;   // columns (x)
  int height = 0;  // rows (y)
  double resolution = 0.05;
  Vec2 origin{0.0, 0.0};

  int size() const { return width * height; }
  bool contains(int r, int c) const {
    return r >= 0 && r < height && c >= 0 && c < width;
  }
  bool contains_point(double x, double y) const;
  int col_of(double x) const {
    return static_cast<int>(std::floor((x - origin.x) / resolution));
  }
  int row_of(double y) const {
    return static_cast<int>(std::floor((y - origin.y) / resolution));
  }
  double cell_center_x(int c) const { return origin.x + (c + 0.5) * resolution; }
  double cell_center_y(int r) const { return origin.y + (r + 0.5) * resolution; }
};

/// Boolean occupancy used by the simulator (ground-truth world geometry).
struct BoolGrid {
  GridGeom geom;
  std::vector<uint8_t> cells;  // row-major, 1 = occupied

  bool occupied(int r, int c) const { return cells[r * geom.width + c] != 0; }
  void set(int r, int c, bool v) { cells[r * geom.width + c] = v ? 1 : 0; }
  bool occupied_at(double x, double y) const;
};

/// Log-odds occupancy built by the filter.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const GridGeom& geom) : geom_(geom), log_odds_(geom.size(), 0.0) {}

  const GridGeom& geom() const { return geom_; }
  double log_odds(int r, int c) const { return log_odds_[r * geom_.width + c]; }
  void add_log_odds(int r, int c, double delta, double clamp);
  double probability(int r, int c) const {
    return 1.0 - 1.0 / (1.0 + std::exp(log_odds(r, c)));
  }
  bool known(int r, int c) const { return log_odds(r, c) != 0.0; }

  const std::vector<double>& raw() const { return log_odds_; }

 private:
  GridGeom geom_;
  std::vector<double> log_odds_;
};

/// Precomputed obstacle-proximity scores over a grid. Internally stores the
/// squared distance (meters^2) to the nearest occupied cell center so a
/// whole-scan likelihood reduces to one exp of a running sum; value() exposes
/// the Gaussian kernel of that distance, always in (0, 1].
class LikelihoodField {
 public:
  LikelihoodField() = default;

  /// Build from the cells of a boolean grid (simulator maps).
  static LikelihoodField from_bool_grid(const BoolGrid& grid, double sigma_hit);

  /// Build from a log-odds map; cells with probability >= occ_threshold count
  /// as obstacles.
  static LikelihoodField from_occupancy(const OccupancyGrid& grid, double sigma_hit,
                                        double occ_threshold = 0.65);

  const GridGeom& geom() const { return geom_; }
  bool empty() const { return sq_dist_.empty(); }
  double sigma_hit() const { return sigma_hit_; }

  /// Squared distance (m^2) from the center of cell (r, c) to the nearest
  /// obstacle, saturated at cap_distance()^2. Unobserved cells read 0 (no
  /// evidence against an endpoint there); out-of-grid queries return the cap.
  double sq_distance(int r, int c) const;
  double sq_distance_at(double x, double y) const;

  /// Gaussian kernel exp(-d^2 / (2 sigma_hit^2)) of the saturated distance,
  /// in [exp(-kCapSigmas^2 / 2), 1].
  double value(int r, int c) const {
    return std::exp(-sq_distance(r, c) / (2.0 * sigma_hit_ * sigma_hit_));
  }
  double value_at(double x, double y) const {
    return std::exp(-sq_distance_at(x, y) / (2.0 * sigma_hit_ * sigma_hit_));
  }

  /// Distances saturate at min(kCapDistance, kCapSigmas * sigma_hit): past
  /// the kernel tail the surface is flat, so far-from-map beam endpoints are
  /// penalized but carry no gradient and cannot zero a whole-scan product.
  double cap_distance() const;
  static constexpr double kCapDistance = 2.0;
  static constexpr double kCapSigmas = 3.0;

  /// False over cells the source map knows nothing about (and outside the
  /// grid). Those cells score as distance 0: unexplored space never penalizes
  /// a pose, while leaving the grid entirely always does.
  bool known(int r, int c) const {
    return geom_.contains(r, c) && known_[r * geom_.width + c] != 0;
  }
  bool known_at(double x, double y) const { return known(geom_.row_of(y), geom_.col_of(x)); }

 private:
  static LikelihoodField build(const GridGeom& geom, const std::vector<uint8_t>& obstacle,
                               std::vector<uint8_t> known, double sigma_hit);

  GridGeom geom_;
  double sigma_hit_ = 0.1;
  std::vector<float> sq_dist_;
  std::vector<uint8_t> known_;
};

/// Cells crossed by the segment from a to b (inclusive), grid-traversal order.
std::vector<std::pair<int, int>> traverse_cells(const GridGeom& geom, Vec2 a, Vec2 b);

}  // namespace dslam
