#include "dslam/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dslam {

namespace {

using json = nlohmann::ordered_json;

BoolGrid make_empty_grid(double w_m, double h_m, double res) {
  GridGeom g;
  g.resolution = res;
  g.width = static_cast<int>(std::lround(w_m / res));
  g.height = static_cast<int>(std::lround(h_m / res));
  g.origin = {0.0, 0.0};
  BoolGrid b;
  b.geom = g;
  b.cells.assign(static_cast<size_t>(g.size()), 0);
  return b;
}

void fill_rect(BoolGrid& g, const Rect& rc, bool v) {
  const GridGeom& geom = g.geom;
  const int c0 = std::max(0, geom.col_of(rc.x0));
  const int c1 = std::min(geom.width - 1, geom.col_of(rc.x1));
  const int r0 = std::max(0, geom.row_of(rc.y0));
  const int r1 = std::min(geom.height - 1, geom.row_of(rc.y1));
  for (int r = r0; r <= r1; r++)
    for (int c = c0; c <= c1; c++)
      if (rc.contains(geom.cell_center_x(c), geom.cell_center_y(r))) g.set(r, c, v);
}

double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double dist_to_path(Vec2 p, const std::vector<Vec2>& wps) {
  double best = std::numeric_limits<double>::infinity();
  const size_t n = wps.size();
  for (size_t i = 0; i < n; i++)
    best = std::min(best, dist_point_segment(p, wps[i], wps[(i + 1) % n]));
  return best;
}

constexpr double kWall = 0.1;  // wall thickness, meters

void add_border_walls(BoolGrid& g, double w, double h, double x_off = 0.0, double y_off = 0.0) {
  fill_rect(g, {x_off, y_off, x_off + w, y_off + kWall}, true);
  fill_rect(g, {x_off, y_off + h - kWall, x_off + w, y_off + h}, true);
  fill_rect(g, {x_off, y_off, x_off + kWall, y_off + h}, true);
  fill_rect(g, {x_off + w - kWall, y_off, x_off + w, y_off + h}, true);
}

void scatter_obstacles(BoolGrid& g, Rng& rng, int count, const Rect& interior,
                       const std::vector<Vec2>& path) {
  for (int i = 0; i < count; i++) {
    for (int attempt = 0; attempt < 60; attempt++) {
      const double sx = rng.uniform(0.3, 0.8);
      const double sy = rng.uniform(0.3, 0.8);
      const double cx = rng.uniform(interior.x0 + sx / 2, interior.x1 - sx / 2);
      const double cy = rng.uniform(interior.y0 + sy / 2, interior.y1 - sy / 2);
      const double half_diag = 0.5 * std::hypot(sx, sy);
      if (dist_to_path({cx, cy}, path) < 0.5 + half_diag) continue;
      fill_rect(g, {cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2}, true);
      break;
    }
  }
}

std::vector<Vec2> room_loop(double w, double h, double margin) {
  const double m = margin;
  return {{m, m},         {w / 2, m},     {w - m, m},     {w - m, h / 2},
          {w - m, h - m}, {w / 2, h - m}, {m, h - m},     {m, h / 2}};
}

WorldModel generate_room(const WorldGenParams& p, Rng& rng) {
  WorldModel w;
  w.grid = make_empty_grid(p.room_w, p.room_h, p.resolution);
  add_border_walls(w.grid, p.room_w, p.room_h);
  w.waypoints = room_loop(p.room_w, p.room_h, 1.5);
  const Rect interior{kWall + 0.3, kWall + 0.3, p.room_w - kWall - 0.3, p.room_h - kWall - 0.3};
  scatter_obstacles(w.grid, rng, p.obstacles, interior, w.waypoints);
  return w;
}

WorldModel generate_corridor(const WorldGenParams& p, Rng& rng) {
  const double L = p.corridor_len;
  const double W = p.corridor_width;
  const double h = W + 2 * kWall;
  const double yc = h / 2;
  WorldModel w;
  w.grid = make_empty_grid(L, h, p.resolution);
  add_border_walls(w.grid, L, h);
  // Notches spaced evenly (with jitter) so the gaps between anchor points
  // stay comparable across generator seeds.
  for (int i = 0; i < p.corridor_features; i++) {
    const double x = L * (i + 1) / (p.corridor_features + 1) + rng.uniform(-1.0, 1.0);
    const bool top = rng.uniform() < 0.5;
    const double y0 = top ? h - kWall - 0.2 : kWall;
    fill_rect(w.grid, {x - 0.1, y0, x + 0.1, y0 + 0.2}, true);
  }
  const double inset = std::min(2.0, 0.1 * L);
  w.degenerate_regions.push_back({inset, kWall, L - inset, h - kWall});
  // Out-and-back: the return leg closes the loop against the robot's own map,
  // so accumulated drift surfaces as re-entry conflict instead of staying
  // hidden past the frontier.
  w.waypoints = {{1.0, yc}, {L - 1.0, yc}, {1.0, yc}};
  return w;
}

WorldModel generate_mixed(const WorldGenParams& p, Rng& rng) {
  const double R = p.room_w;
  const double h = p.room_h;
  const double L = p.corridor_len;
  const double W = p.corridor_width;
  const double yc = h / 2;
  const double total_w = 2 * R + L;
  const double x2 = R + L;  // second room west wall plane

  WorldModel w;
  w.grid = make_empty_grid(total_w, h, p.resolution);
  add_border_walls(w.grid, R, h, 0.0, 0.0);
  add_border_walls(w.grid, R, h, x2, 0.0);
  // corridor side walls between the rooms
  fill_rect(w.grid, {R, yc - W / 2 - kWall, x2, yc - W / 2}, true);
  fill_rect(w.grid, {R, yc + W / 2, x2, yc + W / 2 + kWall}, true);
  // doorways through the facing room walls
  fill_rect(w.grid, {R - kWall, yc - W / 2, R + kWall, yc + W / 2}, false);
  fill_rect(w.grid, {x2 - kWall, yc - W / 2, x2 + kWall, yc + W / 2}, false);

  w.waypoints = {{1.5, yc},          {1.5, 1.3},          {R - 1.3, 1.3},
                 {R - 1.0, yc},      {R + L / 2, yc},     {x2 + 1.0, yc},
                 {x2 + 1.3, h - 1.3}, {total_w - 1.5, h - 1.3}, {total_w - 1.5, yc}};

  const Rect interior1{kWall + 0.3, kWall + 0.3, R - kWall - 0.3, h - kWall - 0.3};
  const Rect interior2{x2 + kWall + 0.3, kWall + 0.3, total_w - kWall - 0.3, h - kWall - 0.3};
  scatter_obstacles(w.grid, rng, p.obstacles, interior1, w.waypoints);
  scatter_obstacles(w.grid, rng, p.obstacles, interior2, w.waypoints);

  const double inset = std::min(2.0, 0.1 * L);
  w.degenerate_regions.push_back({R + inset, yc - W / 2, x2 - inset, yc + W / 2});
  return w;
}

double cast_ray(const BoolGrid& g, double x0, double y0, double angle, double max_range) {
  const GridGeom& geom = g.geom;
  const double dirx = std::cos(angle);
  const double diry = std::sin(angle);
  int c = geom.col_of(x0);
  int r = geom.row_of(y0);
  if (g.occupied(r, c)) return 1e-6;

  const int step_c = dirx > 0 ? 1 : (dirx < 0 ? -1 : 0);
  const int step_r = diry > 0 ? 1 : (diry < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  double t_max_x = inf, t_max_y = inf, t_delta_x = inf, t_delta_y = inf;
  if (step_c != 0) {
    const double bx = geom.origin.x + (step_c > 0 ? c + 1 : c) * geom.resolution;
    t_max_x = (bx - x0) / dirx;
    t_delta_x = geom.resolution / std::abs(dirx);
  }
  if (step_r != 0) {
    const double by = geom.origin.y + (step_r > 0 ? r + 1 : r) * geom.resolution;
    t_max_y = (by - y0) / diry;
    t_delta_y = geom.resolution / std::abs(diry);
  }

  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      c += step_c;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      r += step_r;
      t_max_y += t_delta_y;
    }
    if (t >= max_range) return max_range;
    if (!geom.contains(r, c)) return max_range;
    if (g.occupied(r, c)) return std::max(t, 1e-6);
  }
}

}  // namespace

WorldModel generate_world(const std::string& kind, const WorldGenParams& p, uint64_t seed) {
  if (p.corridor_len < 10.0 || p.corridor_width < 1.0)
    throw std::runtime_error("generate_world: corridor must be >= 10 m long and >= 1 m wide");
  if (p.resolution <= 0.0 || p.room_w <= 2.0 || p.room_h <= 2.0)
    throw std::runtime_error("generate_world: invalid params");
  Rng rng(mix_seed(seed, 0x5eed));
  WorldModel w;
  if (kind == "room")
    w = generate_room(p, rng);
  else if (kind == "corridor")
    w = generate_corridor(p, rng);
  else if (kind == "mixed")
    w = generate_mixed(p, rng);
  else
    throw std::runtime_error("generate_world: unknown kind '" + kind + "'");
  w.name = kind + "-" + std::to_string(seed);
  for (const Vec2& wp : w.waypoints)
    if (w.grid.occupied_at(wp.x, wp.y))
      throw std::runtime_error("generate_world: waypoint occluded");
  return w;
}

LidarScan raycast(const WorldModel& world, const Pose& pose, int n_beams, double fov,
                  double max_range) {
  if (!world.grid.geom.contains_point(pose.x, pose.y))
    throw std::runtime_error("raycast: pose out of bounds");
  LidarScan scan;
  scan.max_range = max_range;
  scan.ranges.resize(n_beams);
  scan.angles.resize(n_beams);
  const bool full_circle = fov > 2.0 * kPi - 1e-9;
  for (int i = 0; i < n_beams; i++) {
    const double a = full_circle ? -fov / 2 + i * fov / n_beams
                                 : -fov / 2 + i * fov / std::max(1, n_beams - 1);
    scan.angles[i] = a;
    scan.ranges[i] = cast_ray(world.grid, pose.x, pose.y, pose.theta + a, max_range);
  }
  return scan;
}

LidarScan simulate_scan(const WorldModel& world, const Pose& pose, const LidarSpec& spec,
                        Rng& rng) {
  LidarScan scan = raycast(world, pose, spec.n_beams, spec.fov, spec.max_range);
  for (double& r : scan.ranges) {
    if (r >= spec.max_range) continue;  // no return, leave at max_range
    r = std::clamp(r + rng.gauss(0.0, spec.range_sigma), 1e-3, spec.max_range);
  }
  return scan;
}

GroundTruthState step_robot(const WorldModel& world, const GroundTruthState& state, double v,
                            double omega, double dt) {
  if (dt <= 0.0) throw std::runtime_error("step_robot: dt must be positive");
  const Pose& p = state.pose;
  const double theta2 = normalize_angle(p.theta + omega * dt);
  double dx, dy;
  if (std::abs(omega) < 1e-9) {
    dx = v * dt * std::cos(p.theta);
    dy = v * dt * std::sin(p.theta);
  } else {
    const double rad = v / omega;
    dx = rad * (std::sin(p.theta + omega * dt) - std::sin(p.theta));
    dy = rad * (std::cos(p.theta) - std::cos(p.theta + omega * dt));
  }

  GroundTruthState next = state;
  next.time += dt;
  next.pose.theta = theta2;

  const double dist = std::hypot(dx, dy);
  bool blocked = false;
  const int steps = std::max(1, static_cast<int>(std::ceil(dist / (world.grid.geom.resolution / 2))));
  for (int i = 1; i <= steps; i++) {
    const double f = static_cast<double>(i) / steps;
    if (world.grid.occupied_at(p.x + f * dx, p.y + f * dy)) {
      blocked = true;
      break;
    }
  }
  if (!blocked) {
    next.pose.x = p.x + dx;
    next.pose.y = p.y + dy;
  }
  return next;
}

OdometryReading odometry_from_motion(const GroundTruthState& prev, const GroundTruthState& cur,
                                     const OdomNoise& noise, Rng& rng) {
  const double dx = cur.pose.x - prev.pose.x;
  const double dy = cur.pose.y - prev.pose.y;
  const double trans = std::hypot(dx, dy);
  const double rot1 = trans > 1e-9 ? normalize_angle(std::atan2(dy, dx) - prev.pose.theta) : 0.0;
  const double rot2 = normalize_angle(cur.pose.theta - prev.pose.theta - rot1);

  const double s1 = std::sqrt(noise.a1 * rot1 * rot1 + noise.a2 * trans * trans);
  const double st = std::sqrt(noise.a3 * trans * trans + noise.a4 * (rot1 * rot1 + rot2 * rot2));
  const double s2 = std::sqrt(noise.a1 * rot2 * rot2 + noise.a2 * trans * trans);

  OdometryReading u;
  u.d_rot1 = normalize_angle(rot1 + rng.gauss() * s1);
  u.d_trans = std::max(0.0, trans + rng.gauss() * st);
  u.d_rot2 = normalize_angle(rot2 + rng.gauss() * s2);
  return u;
}

bool gt_degenerate(const WorldModel& world, const Pose& pose) {
  for (const Rect& r : world.degenerate_regions)
    if (r.contains(pose.x, pose.y)) return true;
  return false;
}

void save_world(const WorldModel& w, const std::string& path) {
  json j;
  j["name"] = w.name;
  j["resolution"] = w.grid.geom.resolution;
  j["origin"] = {w.grid.geom.origin.x, w.grid.geom.origin.y};
  json grid;
  grid["width"] = w.grid.geom.width;
  grid["height"] = w.grid.geom.height;
  json occ = json::array();
  for (int r = 0; r < w.grid.geom.height; r++)
    for (int c = 0; c < w.grid.geom.width; c++)
      if (w.grid.occupied(r, c)) occ.push_back({r, c});
  grid["occupied"] = std::move(occ);
  j["grid"] = std::move(grid);
  json regions = json::array();
  for (const Rect& r : w.degenerate_regions) regions.push_back({r.x0, r.y0, r.x1, r.y1});
  j["degenerate_regions"] = std::move(regions);
  json wps = json::array();
  for (const Vec2& p : w.waypoints) wps.push_back({p.x, p.y});
  j["waypoints"] = std::move(wps);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_world: cannot open " + path);
  out << j.dump(1) << "\n";
}

WorldModel load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_world: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_world: parse error in " + path + ": " + e.what());
  }

  WorldModel w;
  w.name = j.at("name").get<std::string>();
  GridGeom geom;
  geom.resolution = j.at("resolution").get<double>();
  if (geom.resolution <= 0.0) throw std::runtime_error("load_world: resolution must be > 0");
  geom.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
  geom.width = j.at("grid").at("width").get<int>();
  geom.height = j.at("grid").at("height").get<int>();
  if (geom.width <= 0 || geom.height <= 0) throw std::runtime_error("load_world: empty grid");
  w.grid.geom = geom;
  w.grid.cells.assign(static_cast<size_t>(geom.size()), 0);
  for (const auto& rc : j.at("grid").at("occupied")) {
    const int r = rc.at(0).get<int>();
    const int c = rc.at(1).get<int>();
    if (!geom.contains(r, c)) throw std::runtime_error("load_world: occupied cell out of bounds");
    w.grid.set(r, c, true);
  }
  const double x_max = geom.origin.x + geom.width * geom.resolution;
  const double y_max = geom.origin.y + geom.height * geom.resolution;
  for (const auto& reg : j.at("degenerate_regions")) {
    Rect r{reg.at(0).get<double>(), reg.at(1).get<double>(), reg.at(2).get<double>(),
           reg.at(3).get<double>()};
    if (r.x0 > r.x1 || r.y0 > r.y1 || r.x0 < geom.origin.x || r.y0 < geom.origin.y ||
        r.x1 > x_max || r.y1 > y_max)
      throw std::runtime_error("load_world: degenerate region outside grid bounds");
    w.degenerate_regions.push_back(r);
  }
  for (const auto& wp : j.at("waypoints")) {
    Vec2 p{wp.at(0).get<double>(), wp.at(1).get<double>()};
    if (w.grid.occupied_at(p.x, p.y)) throw std::runtime_error("load_world: waypoint occluded");
    w.waypoints.push_back(p);
  }
  return w;
}

}  // namespace dslam
