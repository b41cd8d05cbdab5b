#include "dslam/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dslam/degeneracy.hpp"

namespace dslam {

Pose sample_motion_model(const Pose& pose, const OdometryReading& u, const OdomNoise& noise,
                         Rng& rng) {
  const double r1 = u.d_rot1;
  const double tr = u.d_trans;
  const double r2 = u.d_rot2;
  const double s1 = std::sqrt(noise.a1 * r1 * r1 + noise.a2 * tr * tr);
  const double st = std::sqrt(noise.a3 * tr * tr + noise.a4 * (r1 * r1 + r2 * r2));
  const double s2 = std::sqrt(noise.a1 * r2 * r2 + noise.a2 * tr * tr);

  const double rot1 = r1 + rng.gauss() * s1;
  const double trans = tr + rng.gauss() * st;
  const double rot2 = r2 + rng.gauss() * s2;

  Pose out;
  out.x = pose.x + trans * std::cos(pose.theta + rot1);
  out.y = pose.y + trans * std::sin(pose.theta + rot1);
  out.theta = normalize_angle(pose.theta + rot1 + rot2);
  return out;
}

double motion_prior(const Pose& prev, const Pose& cur, const OdometryReading& u,
                    const OdomNoise& noise) {
  const double r1 = u.d_rot1;
  const double tr = u.d_trans;
  const double r2 = u.d_rot2;

  const double h1 = prev.theta + r1;  // heading while translating
  Pose mean;
  mean.x = prev.x + tr * std::cos(h1);
  mean.y = prev.y + tr * std::sin(h1);
  mean.theta = normalize_angle(prev.theta + r1 + r2);

  const double v_rot1 = noise.a1 * r1 * r1 + noise.a2 * tr * tr;
  const double v_rot2 = noise.a1 * r2 * r2 + noise.a2 * tr * tr;
  const double v_trans = noise.a3 * tr * tr + noise.a4 * (r1 * r1 + r2 * r2);

  // Deviation split into forward / lateral / heading in the frame of the
  // commanded motion; lateral spread is first-order in the rot1 noise. The
  // inverse decomposition would blow up at small translations, this stays
  // conditioned.
  const double dx = cur.x - mean.x;
  const double dy = cur.y - mean.y;
  const double c = std::cos(h1), s = std::sin(h1);
  const double e_fwd = c * dx + s * dy;
  const double e_lat = -s * dx + c * dy;
  const double e_th = normalize_angle(cur.theta - mean.theta);

  // Variance floors: the density is evaluated at scan-matched poses, which
  // are quantized at roughly half a map cell, so a translational sigma below
  // 0.025 m would turn matcher jitter into weight collapse. Heading floor
  // 0.01 rad for the same reason at the matcher's angular resolution.
  constexpr double floor_t = 6.25e-4;
  constexpr double floor_r = 1e-4;
  const double vf = std::max(v_trans, floor_t);
  const double vl = std::max(tr * tr * v_rot1, floor_t);
  const double vt = std::max(v_rot1 + v_rot2, floor_r);
  return std::exp(-0.5 * (e_fwd * e_fwd / vf + e_lat * e_lat / vl + e_th * e_th / vt));
}

namespace {

struct BeamCache {
  std::vector<double> ux, uy, range;  // hit beams only, sensor-frame unit dirs
};

BeamCache make_cache(const LidarScan& scan) {
  BeamCache bc;
  const int n = scan.size();
  bc.ux.reserve(n);
  bc.uy.reserve(n);
  bc.range.reserve(n);
  for (int i = 0; i < n; i++) {
    if (scan.ranges[i] >= scan.max_range - 1e-9) continue;
    bc.ux.push_back(std::cos(scan.angles[i]));
    bc.uy.push_back(std::sin(scan.angles[i]));
    bc.range.push_back(scan.ranges[i]);
  }
  return bc;
}

double likelihood_cached(const BeamCache& bc, const LikelihoodField& field, const Pose& pose) {
  if (bc.range.empty() || field.empty()) return 0.0;
  const double ct = std::cos(pose.theta);
  const double st = std::sin(pose.theta);
  double sum_sq = 0.0;
  for (size_t i = 0; i < bc.range.size(); i++) {
    const double ex = pose.x + bc.range[i] * (ct * bc.ux[i] - st * bc.uy[i]);
    const double ey = pose.y + bc.range[i] * (st * bc.ux[i] + ct * bc.uy[i]);
    sum_sq += field.sq_distance_at(ex, ey);
  }
  const double sh = field.sigma_hit();
  return std::exp(-sum_sq / (2.0 * sh * sh * static_cast<double>(bc.range.size())));
}

MatchResult match_cached(const BeamCache& bc, const Pose& pose0, const LikelihoodField& field) {
  MatchResult best{pose0, likelihood_cached(bc, field, pose0)};
  if (bc.range.empty() || field.empty()) return best;

  double step_t = 0.05;
  double step_r = 0.02;
  while (step_t >= 0.005 || step_r >= 0.002) {
    for (int guard = 0; guard < 100; guard++) {
      const Pose c = best.pose;
      const Pose cands[6] = {
          {c.x + step_t, c.y, c.theta},
          {c.x - step_t, c.y, c.theta},
          {c.x, c.y + step_t, c.theta},
          {c.x, c.y - step_t, c.theta},
          {c.x, c.y, normalize_angle(c.theta + step_r)},
          {c.x, c.y, normalize_angle(c.theta - step_r)},
      };
      bool improved = false;
      for (const Pose& cand : cands) {
        const double s = likelihood_cached(bc, field, cand);
        if (s > best.score) {
          best = {cand, s};
          improved = true;
        }
      }
      if (!improved) break;
    }
    step_t /= 2;
    step_r /= 2;
  }
  return best;
}

}  // namespace

double scan_likelihood(const LidarScan& scan, const LikelihoodField& field, const Pose& pose) {
  return likelihood_cached(make_cache(scan), field, pose);
}

MatchResult scan_match(const Pose& pose0, const LidarScan& scan, const LikelihoodField& field) {
  return match_cached(make_cache(scan), pose0, field);
}

void update_weights(ParticleSet& set, const std::vector<double>& scores,
                    const std::vector<double>& motion_priors) {
  const size_t n = set.particles.size();
  if (scores.size() != n || motion_priors.size() != n)
    throw std::invalid_argument("update_weights: array length mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < n; i++) {
    if (scores[i] < 0.0 || motion_priors[i] < 0.0)
      throw std::invalid_argument("update_weights: negative input");
    set.particles[i].weight = scores[i] * motion_priors[i];
    sum += set.particles[i].weight;
  }
  if (sum <= 0.0) {
    for (auto& p : set.particles) p.weight = 1.0 / static_cast<double>(n);
  } else {
    for (auto& p : set.particles) p.weight /= sum;
  }
  set.normalized = true;
}

double n_eff(const std::vector<double>& weights) {
  double sum = 0.0, sum_sq = 0.0;
  for (double w : weights) {
    sum += w;
    sum_sq += w * w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("n_eff: weights not normalized");
  return 1.0 / sum_sq;
}

std::vector<int> systematic_indices(const std::vector<double>& weights, double u0) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> idx;
  idx.reserve(n);
  double cum = weights[0];
  int i = 0;
  for (int m = 0; m < n; m++) {
    const double u = u0 + static_cast<double>(m) / n;
    while (u > cum && i < n - 1) {
      i++;
      cum += weights[i];
    }
    idx.push_back(i);
  }
  return idx;
}

void resample(ParticleSet& set, Rng& rng) {
  const int n = set.size();
  std::vector<double> w(n);
  for (int i = 0; i < n; i++) w[i] = set.particles[i].weight;
  const std::vector<int> idx = systematic_indices(w, rng.uniform() / n);
  std::vector<Particle> next(n);
  for (int i = 0; i < n; i++) {
    next[i] = set.particles[idx[i]];
    next[i].weight = 1.0 / n;
  }
  set.particles = std::move(next);
  set.normalized = true;
}

void update_map(OccupancyGrid& grid, const Pose& pose, const LidarScan& scan) {
  const GridGeom& geom = grid.geom();
  const Vec2 origin{pose.x, pose.y};
  const double push = 0.5 * geom.resolution;
  for (int i = 0; i < scan.size(); i++) {
    const double r = scan.ranges[i];
    const bool hit = r < scan.max_range - 1e-9;
    const double ang = pose.theta + scan.angles[i];
    const double cx = std::cos(ang), cy = std::sin(ang);
    const Vec2 end{pose.x + r * cx, pose.y + r * cy};
    // The measured range puts the endpoint exactly on the obstacle surface,
    // which is a cell boundary; the occupied vote goes half a cell deeper
    // along the beam so it cannot dither into the free cell in front.
    const int end_r = hit ? geom.row_of(end.y + push * cy) : -1;
    const int end_c = hit ? geom.col_of(end.x + push * cx) : -1;
    for (const auto& [cr, cc] : traverse_cells(geom, origin, end)) {
      if (cr == end_r && cc == end_c) continue;
      grid.add_log_odds(cr, cc, kLogOddsFree, kLogOddsClamp);
    }
    if (hit && geom.contains(end_r, end_c))
      grid.add_log_odds(end_r, end_c, kLogOddsOcc, kLogOddsClamp);
  }
}

SlamState::SlamState(const SlamConfig& config, const GridGeom& map_geom, const Pose& start,
                     uint64_t seed)
    : cfg(config), map(map_geom), rng(seed), estimate(start) {
  set.particles.assign(cfg.n_particles, Particle{start, 1.0 / cfg.n_particles, 0.0});
  set.normalized = true;
}

void SlamState::bootstrap(const LidarScan& scan) {
  update_map(map, estimate, scan);
  field = LikelihoodField::from_occupancy(map, cfg.sigma_hit);
  updates_since_rebuild = 0;
}

StepResult slam_step(SlamState& state, const OdometryReading& u, const LidarScan& scan,
                     const FactorProvider& factor_provider) {
  const int n = state.set.size();
  std::vector<Pose> prev(n);
  SwarmSnapshot snap;
  snap.p_u.resize(n);
  snap.p_z.resize(n);
  snap.scores_z.resize(n);

  for (int i = 0; i < n; i++) {
    prev[i] = state.set.particles[i].pose;
    snap.p_u[i] = sample_motion_model(prev[i], u, state.cfg.odom_noise, state.rng);
  }
  const BeamCache bc = make_cache(scan);
  for (int i = 0; i < n; i++) {
    const MatchResult m = match_cached(bc, snap.p_u[i], state.field);
    snap.p_z[i] = m.pose;
    snap.scores_z[i] = m.score;
  }
  snap.sigma_xt = swarm_covariance(snap.p_z);

  const double a =
      factor_provider ? std::clamp(factor_provider(snap), 0.0, 1.0) : 0.0;
  // Below the gate fusion could only jitter poses by a fraction of a cell, so
  // the step degenerates to the plain pipeline instead of rescoring noise.
  Selection sel;
  if (a < kFactorGate) {
    sel.poses = snap.p_z;
    sel.scores = snap.scores_z;
    for (int i = 1; i < n; i++)
      if (sel.scores[i] > sel.scores[sel.best_index]) sel.best_index = i;
    sel.best_score = sel.scores[sel.best_index];
  } else {
    const FusionResult fused = fuse(snap.p_z, centroid(snap.p_u), a);
    sel = select_distribution(snap.p_z, snap.scores_z, fused, scan, state.field);
  }

  std::vector<double> priors(n);
  for (int i = 0; i < n; i++) {
    priors[i] = motion_prior(prev[i], sel.poses[i], u, state.cfg.odom_noise);
    state.set.particles[i].pose = sel.poses[i];
    state.set.particles[i].score = sel.scores[i];
  }
  update_weights(state.set, sel.scores, priors);

  std::vector<double> w(n);
  for (int i = 0; i < n; i++) w[i] = state.set.particles[i].weight;

  StepResult res;
  res.a = a;
  res.sigma_xt = snap.sigma_xt;
  res.selected = sel.choice;
  res.n_eff = n_eff(w);
  if (res.n_eff < state.cfg.resample_fraction * n) {
    resample(state.set, state.rng);
    state.resample_count++;
    res.resampled = true;
  }

  int best = 0;
  for (int i = 1; i < n; i++)
    if (state.set.particles[i].score > state.set.particles[best].score) best = i;
  res.estimate = state.set.particles[best].pose;
  res.best_score = state.set.particles[best].score;
  state.estimate = res.estimate;

  update_map(state.map, res.estimate, scan);
  state.updates_since_rebuild++;
  if (state.updates_since_rebuild >= state.cfg.field_rebuild_period) {
    state.field = LikelihoodField::from_occupancy(state.map, state.cfg.sigma_hit);
    state.updates_since_rebuild = 0;
  }
  state.steps++;
  return res;
}

}  // namespace dslam
