#pragma once

#include <vector>

#include "dslam/common.hpp"
#include "dslam/filter.hpp"

namespace dslam {

/// Rigid translation of p_z toward the motion-model centroid: every pose is
/// shifted by a * (g_u - g_z), orientations untouched.
struct FusionResult {
  std::vector<Pose> p_c;
  Vec2 g_c;
  Vec2 shift;
};

struct Selection {
  char choice = 'Z';  // 'Z' or 'C'
  std::vector<Pose> poses;
  std::vector<double> scores;
  int best_index = 0;
  double best_score = 0.0;
};

struct AnalyticDetectorReport {
  double hessian[3][3] = {};
  double eigenvalues[3] = {};  // ascending, full (x, y, theta) problem
  double factor = 0.0;         // in [0, 1], higher = more degenerate
};

Vec2 centroid(const std::vector<Pose>& poses);

/// Sample covariance of (x, y) with 1/(N-1) normalization; N >= 2.
Mat2 swarm_covariance(const std::vector<Pose>& poses);

/// sqrt((g_u - g_z)^T Sigma^-1 (g_u - g_z)); Sigma regularized by +1e-9 I
/// when near-singular, rejected if still not positive definite.
double mahalanobis(Vec2 g_u, Vec2 g_z, const Mat2& sigma);

FusionResult fuse(const std::vector<Pose>& p_z, Vec2 g_u, double a);

/// Rescores the fused poses and keeps whichever set has the higher best
/// particle score; ties keep Z so fusion never intervenes without evidence.
Selection select_distribution(const std::vector<Pose>& p_z, const std::vector<double>& scores_z,
                              const FusionResult& fusion, const LidarScan& scan,
                              const LikelihoodField& field);

/// Curvature-based reference detector: central-difference Hessian of
/// -log scan_likelihood at pose (steps 0.02 m / 0.01 rad), factor
/// 1 - lambda_min/(lambda_max + eps) over the translational 2x2 block.
/// Flat or non-finite curvature reports factor 1.
AnalyticDetectorReport hessian_detector(const Pose& pose, const LidarScan& scan,
                                        const LikelihoodField& field);

}  // namespace dslam
