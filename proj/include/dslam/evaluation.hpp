#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dslam/export.hpp"
#include "dslam/training.hpp"

namespace dslam {

struct AteResult {
  double rmse = 0.0;
  double max_dx = 0.0;
  double max_dy = 0.0;
  int matches = 0;
};

/// Pairs poses by nearest timestamp (within half the median ground-truth step
/// period; gt must be time-sorted), expresses both trajectories in the frame
/// of the first ground-truth pose, and reduces the positional residuals.
/// Deliberately no shape alignment: drift is the quantity of interest.
AteResult compute_ate(const std::vector<TrajectoryPoint>& est,
                      const std::vector<TrajectoryPoint>& gt);

struct DetectionFrame {
  double t = 0.0;
  double factor = 0.0;
  bool gt_label = false;
};

struct DetectionMetrics {
  double success_ratio = 0.0;  // fraction of frames classified correctly
  int fp = 0;
  int fn = 0;
};

/// factor > threshold predicts "degenerate"; the boundary counts as healthy.
DetectionMetrics detection_metrics(const std::vector<DetectionFrame>& series,
                                   double threshold = 0.75);

/// mode: "doa" (checkpoint policy mean), "vanilla" (a = 0),
/// "analytic-baseline" (curvature detector on the best-scoring particle), or
/// "constant:<a>".
std::unique_ptr<ActionSource> make_action_source(const std::string& mode,
                                                 const std::string& checkpoint);

struct EvalConfig {
  std::string mode = "vanilla";
  std::string checkpoint;
  WorldSpec world;
  RolloutSettings rollout;
  std::vector<uint64_t> seeds{1};
  double detection_threshold = 0.75;
  std::string out_dir = "out";
  bool artifacts = true;  // per-seed map, trajectories and factor plot
};

struct SeedEvalRow {
  uint64_t seed = 0;
  double ate = 0.0;
  double max_dx = 0.0;
  double max_dy = 0.0;
  int resamples = 0;
  double mean_neff = 0.0;
  double success_ratio = 0.0;
  int degenerate_frames = 0;  // 0 means success_ratio had no positive labels
};

struct EvalResult {
  std::vector<SeedEvalRow> rows;
  std::string csv;  // also written to <out_dir>/eval.csv
};

/// Runs one rollout per seed (seeds fan out across threads; outputs are
/// per-seed files plus one ordered CSV) and aggregates the metric rows.
EvalResult run_eval(const EvalConfig& cfg);

std::vector<DetectionFrame> detection_series(const RolloutResult& rollout);

}  // namespace dslam
