#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "dslam/common.hpp"
#include "dslam/grid.hpp"

namespace dslam {

inline constexpr const char* kCodeVersion = "1.0.0";

struct TrajectoryPoint {
  double t = 0.0;
  Pose pose;
};

/// P5 map image (0 occupied, 254 free, 205 unknown; row 0 at the top) plus a
/// <path>.meta.json sidecar with resolution, origin and the thresholds.
void write_pgm(const OccupancyGrid& map, const std::string& path);

/// One line per pose: "timestamp x y z qx qy qz qw", 6 decimals, yaw-only
/// quaternion.
void write_trajectory(const std::string& path, const std::vector<TrajectoryPoint>& traj);
std::vector<TrajectoryPoint> read_trajectory(const std::string& path);

/// Shortest stable formatting used in every CSV cell (%.9g).
std::string fmt_num(double v);

void write_text(const std::string& path, const std::string& content);

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

/// Deterministic SVG line chart. With band=true, two or more series of
/// identical x grids collapse to a mean line with a +-1 std band; otherwise
/// one polyline per series.
void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label, bool band = true);

/// Records what produced a run directory: subcommand, code version, resolved
/// config.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::ordered_json& resolved_config);

}  // namespace dslam
