#pragma once

#include <functional>
#include <vector>

#include "dslam/common.hpp"
#include "dslam/grid.hpp"
#include "dslam/world.hpp"

namespace dslam {

struct Particle {
  Pose pose;
  double weight = 0.0;
  double score = 0.0;
};

struct ParticleSet {
  std::vector<Particle> particles;
  bool normalized = false;

  int size() const { return static_cast<int>(particles.size()); }
};

/// Per-step view of the swarm handed to the degeneracy factor source:
/// motion-model poses, post-scan-match poses with their scores, and the
/// positional covariance of the latter.
struct SwarmSnapshot {
  std::vector<Pose> p_u;
  std::vector<Pose> p_z;
  std::vector<double> scores_z;
  Mat2 sigma_xt;
};

/// Applies the odometry increment with alpha-model perturbations. Consumes
/// exactly three Gaussian draws; zero noise gives the deterministic
/// composition.
Pose sample_motion_model(const Pose& pose, const OdometryReading& u, const OdomNoise& noise,
                         Rng& rng);

/// Unnormalized alpha-model density of the arrival pose cur given (prev, u),
/// evaluated to first order in the frame of the commanded motion (forward /
/// lateral / heading deviations). Sigmas are floored at 0.025 m / 0.01 rad,
/// the matcher's own output resolution, so stationary readings and sub-cell
/// jitter stay well conditioned.
double motion_prior(const Pose& prev, const Pose& cur, const OdometryReading& u,
                    const OdomNoise& noise);

/// Geometric mean over beams of the field value at each beam endpoint.
/// Max-range beams are skipped; returns 0 if every beam is skipped or the
/// field is empty. Endpoints in unobserved cells read value 1 (no evidence),
/// endpoints outside the grid read the floor value.
double scan_likelihood(const LidarScan& scan, const LikelihoodField& field, const Pose& pose);

struct MatchResult {
  Pose pose;
  double score = 0.0;
};

/// Greedy coordinate ascent on scan_likelihood over (x, y, theta): steps start
/// at 0.05 m / 0.02 rad, halve when no neighbor improves, stop below
/// 0.005 m / 0.002 rad. The returned score never drops below the score of
/// pose0.
MatchResult scan_match(const Pose& pose0, const LidarScan& scan, const LikelihoodField& field);

/// weight_i proportional to scores[i] * motion_priors[i], normalized; uniform
/// fallback when every product is zero. Rejects negative inputs.
void update_weights(ParticleSet& set, const std::vector<double>& scores,
                    const std::vector<double>& motion_priors);

/// 1 / sum(w^2) for a normalized weight vector; always in [1, N].
double n_eff(const std::vector<double>& weights);

/// Index walk of the low-variance systematic resampler given the initial
/// offset u0 in [0, 1/N). Exposed so the deterministic walk is testable.
std::vector<int> systematic_indices(const std::vector<double>& weights, double u0);

/// Low-variance systematic resampling; output weights are uniform.
void resample(ParticleSet& set, Rng& rng);

/// Log-odds update: cells crossed by each beam get kLogOddsFree, endpoint
/// cells of hit beams get kLogOddsOcc, everything clamped to +-10. Max-range
/// beams carve free space only.
void update_map(OccupancyGrid& grid, const Pose& pose, const LidarScan& scan);

inline constexpr double kLogOddsOcc = 0.85;
inline constexpr double kLogOddsFree = -0.4;
inline constexpr double kLogOddsClamp = 10.0;

/// Factors below this skip fusion entirely; a quiet agent leaves the plain
/// pipeline bit-identical instead of perturbing it by sub-cell shifts.
inline constexpr double kFactorGate = 0.05;

struct SlamConfig {
  int n_particles = 30;
  OdomNoise odom_noise;         // filter-side motion spread
  double sigma_hit = 0.1;       // likelihood field kernel, meters
  int field_rebuild_period = 10;  // map updates between field rebuilds
  double resample_fraction = 0.5;  // resample iff n_eff < fraction * N
};

struct SlamState {
  SlamConfig cfg;
  ParticleSet set;
  OccupancyGrid map;
  LikelihoodField field;
  Rng rng;
  Pose estimate;
  int steps = 0;
  int resample_count = 0;
  int updates_since_rebuild = 0;

  SlamState(const SlamConfig& config, const GridGeom& map_geom, const Pose& start, uint64_t seed);

  /// Seeds the map with a scan taken at the known start pose and builds the
  /// first likelihood field.
  void bootstrap(const LidarScan& scan);
};

struct StepResult {
  Pose estimate;
  double a = 0.0;          // applied degeneracy factor
  double n_eff = 0.0;      // of the post-update weights
  Mat2 sigma_xt;           // positional covariance of p_z
  double best_score = 0.0; // score of the estimate in the selected set
  bool resampled = false;
  char selected = 'Z';     // 'Z' or 'C'
};

using FactorProvider = std::function<double(const SwarmSnapshot&)>;

/// One filter update: motion sampling, per-particle scan matching, factor
/// query, fusion + selection, weighting, conditional resampling, map update
/// from the best particle.
StepResult slam_step(SlamState& state, const OdometryReading& u, const LidarScan& scan,
                     const FactorProvider& factor_provider);

}  // namespace dslam
