#pragma once

#include <string>
#include <vector>

#include "dslam/common.hpp"
#include "dslam/grid.hpp"

namespace dslam {

/// Closed axis-aligned rectangle in world meters.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct WorldModel {
  std::string name;
  BoolGrid grid;
  std::vector<Rect> degenerate_regions;
  std::vector<Vec2> waypoints;
};

struct GroundTruthState {
  Pose pose;
  double time = 0.0;
};

struct LidarScan {
  std::vector<double> ranges;  // meters, in (0, max_range]
  std::vector<double> angles;  // sensor frame, radians
  double max_range = 8.0;

  int size() const { return static_cast<int>(ranges.size()); }
};

/// Relative motion (rot1, trans, rot2) in the odometry frame.
struct OdometryReading {
  double d_rot1 = 0.0;
  double d_trans = 0.0;  // >= 0
  double d_rot2 = 0.0;
};

/// Odometry alpha-model noise: rotation noise from rotation (a1) and
/// translation (a2); translation noise from translation (a3) and rotation (a4).
struct OdomNoise {
  double a1 = 0.05;
  double a2 = 0.01;
  double a3 = 0.05;
  double a4 = 0.01;

  static OdomNoise zero() { return {0.0, 0.0, 0.0, 0.0}; }
};

struct LidarSpec {
  int n_beams = 180;
  double fov = 2.0 * kPi;
  double max_range = 8.0;
  double range_sigma = 0.01;  // additive Gaussian range noise, meters
};

struct WorldGenParams {
  double resolution = 0.05;
  double room_w = 10.0;
  double room_h = 10.0;
  int obstacles = 12;
  double corridor_len = 20.0;
  double corridor_width = 2.0;
  int corridor_features = 0;  // sparse wall notches along the corridor
};

WorldModel load_world(const std::string& path);
void save_world(const WorldModel& world, const std::string& path);

/// Deterministic generator. kind: "room" (walled box, random box obstacles,
/// loop waypoints), "corridor" (straight hallway, centerline waypoints, one
/// degenerate region), "mixed" (room - corridor - room, loop in each room).
WorldModel generate_world(const std::string& kind, const WorldGenParams& params, uint64_t seed);

/// Noise-free ranges to the first occupied cell along each beam, clamped to
/// max_range. Beams evenly spaced over fov, centered on pose heading.
LidarScan raycast(const WorldModel& world, const Pose& pose, int n_beams, double fov,
                  double max_range);

/// raycast plus per-beam Gaussian range noise, clamped back to (0, max_range].
LidarScan simulate_scan(const WorldModel& world, const Pose& pose, const LidarSpec& spec,
                        Rng& rng);

/// Unicycle step; translation is cancelled if the swept path touches an
/// occupied cell (heading still updates).
GroundTruthState step_robot(const WorldModel& world, const GroundTruthState& state, double v,
                            double omega, double dt);

/// Decomposes the relative motion prev->cur into (rot1, trans, rot2) and
/// perturbs each per the alpha model. Consumes exactly three Gaussian draws.
OdometryReading odometry_from_motion(const GroundTruthState& prev, const GroundTruthState& cur,
                                     const OdomNoise& noise, Rng& rng);

bool gt_degenerate(const WorldModel& world, const Pose& pose);

}  // namespace dslam
