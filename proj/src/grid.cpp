#include "dslam/grid.hpp"

#include <algorithm>
#include <limits>

namespace dslam {

bool GridGeom::contains_point(double x, double y) const {
  const int c = col_of(x);
  const int r = row_of(y);
  return contains(r, c);
}

bool BoolGrid::occupied_at(double x, double y) const {
  const int c = geom.col_of(x);
  const int r = geom.row_of(y);
  if (!geom.contains(r, c)) return true;  // outside counts as solid
  return occupied(r, c);
}

void OccupancyGrid::add_log_odds(int r, int c, double delta, double clamp) {
  double& v = log_odds_[r * geom_.width + c];
  v = std::clamp(v + delta, -clamp, clamp);
}

namespace {

// 1D squared-distance transform (Felzenszwalb & Huttenlocher), lower envelope
// of parabolas rooted at f. Distances in cell units.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n,
            std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; q++) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      k--;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    k++;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; q++) {
    while (z[k + 1] < q) k++;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

}  // namespace

LikelihoodField LikelihoodField::build(const GridGeom& geom,
                                       const std::vector<uint8_t>& obstacle,
                                       std::vector<uint8_t> known, double sigma_hit) {
  const int w = geom.width;
  const int h = geom.height;
  const double inf = 1e12;

  // Two-pass exact Euclidean distance transform, in cell units.
  std::vector<double> dist(static_cast<size_t>(w) * h);
  for (int i = 0; i < w * h; i++) dist[i] = obstacle[i] ? 0.0 : inf;

  const int n_max = std::max(w, h);
  std::vector<double> f(n_max), d(n_max), z(n_max + 1);
  std::vector<int> v(n_max);

  for (int c = 0; c < w; c++) {  // columns
    for (int r = 0; r < h; r++) f[r] = dist[r * w + c];
    edt_1d(f, d, h, v, z);
    for (int r = 0; r < h; r++) dist[r * w + c] = d[r];
  }
  for (int r = 0; r < h; r++) {  // rows
    for (int c = 0; c < w; c++) f[c] = dist[r * w + c];
    edt_1d(f, d, w, v, z);
    for (int c = 0; c < w; c++) dist[r * w + c] = d[c];
  }

  LikelihoodField field;
  field.geom_ = geom;
  field.sigma_hit_ = sigma_hit;
  field.known_ = std::move(known);
  field.sq_dist_.resize(dist.size());
  const double res2 = geom.resolution * geom.resolution;
  const double cap2 = field.cap_distance() * field.cap_distance();
  for (size_t i = 0; i < dist.size(); i++) {
    // Unobserved cells carry no evidence either way; outside the grid the
    // caller sees the full cap via sq_distance().
    field.sq_dist_[i] =
        field.known_[i] ? static_cast<float>(std::min(dist[i] * res2, cap2)) : 0.0f;
  }
  return field;
}

double LikelihoodField::cap_distance() const {
  return std::min(kCapDistance, kCapSigmas * sigma_hit_);
}

LikelihoodField LikelihoodField::from_bool_grid(const BoolGrid& grid, double sigma_hit) {
  return build(grid.geom, grid.cells, std::vector<uint8_t>(grid.geom.size(), 1), sigma_hit);
}

LikelihoodField LikelihoodField::from_occupancy(const OccupancyGrid& grid, double sigma_hit,
                                                double occ_threshold) {
  const GridGeom& geom = grid.geom();
  std::vector<uint8_t> obstacle(geom.size(), 0);
  std::vector<uint8_t> known(geom.size(), 0);
  for (int r = 0; r < geom.height; r++)
    for (int c = 0; c < geom.width; c++) {
      if (grid.probability(r, c) >= occ_threshold) obstacle[r * geom.width + c] = 1;
      if (grid.known(r, c)) known[r * geom.width + c] = 1;
    }
  return build(geom, obstacle, std::move(known), sigma_hit);
}

double LikelihoodField::sq_distance(int r, int c) const {
  if (!geom_.contains(r, c)) return cap_distance() * cap_distance();
  return sq_dist_[r * geom_.width + c];
}

double LikelihoodField::sq_distance_at(double x, double y) const {
  return sq_distance(geom_.row_of(y), geom_.col_of(x));
}

std::vector<std::pair<int, int>> traverse_cells(const GridGeom& geom, Vec2 a, Vec2 b) {
  // Amanatides-Woo voxel traversal clipped to the grid.
  std::vector<std::pair<int, int>> out;
  int c = geom.col_of(a.x);
  int r = geom.row_of(a.y);
  const int c_end = geom.col_of(b.x);
  const int r_end = geom.row_of(b.y);

  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const int step_c = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_r = dy > 0 ? 1 : (dy < 0 ? -1 : 0);

  auto boundary_x = [&](int col) { return geom.origin.x + (step_c > 0 ? col + 1 : col) * geom.resolution; };
  auto boundary_y = [&](int row) { return geom.origin.y + (step_r > 0 ? row + 1 : row) * geom.resolution; };

  double t_max_x = step_c != 0 ? (boundary_x(c) - a.x) / dx : std::numeric_limits<double>::infinity();
  double t_max_y = step_r != 0 ? (boundary_y(r) - a.y) / dy : std::numeric_limits<double>::infinity();
  const double t_delta_x = step_c != 0 ? geom.resolution / std::abs(dx) : std::numeric_limits<double>::infinity();
  const double t_delta_y = step_r != 0 ? geom.resolution / std::abs(dy) : std::numeric_limits<double>::infinity();

  const int max_cells = 2 * (geom.width + geom.height) + 4;
  for (int i = 0; i < max_cells; i++) {
    if (geom.contains(r, c)) out.emplace_back(r, c);
    if (c == c_end && r == r_end) break;
    if (t_max_x < t_max_y) {
      c += step_c;
      t_max_x += t_delta_x;
    } else {
      r += step_r;
      t_max_y += t_delta_y;
    }
  }
  return out;
}

}  // namespace dslam
