#include "dslam/degeneracy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace dslam {

Vec2 centroid(const std::vector<Pose>& poses) {
  if (poses.empty()) throw std::invalid_argument("centroid: empty pose set");
  Vec2 g;
  for (const Pose& p : poses) {
    g.x += p.x;
    g.y += p.y;
  }
  const double n = static_cast<double>(poses.size());
  return {g.x / n, g.y / n};
}

Mat2 swarm_covariance(const std::vector<Pose>& poses) {
  const size_t n = poses.size();
  if (n < 2) throw std::invalid_argument("swarm_covariance: need at least 2 poses");
  const Vec2 g = centroid(poses);
  Mat2 s;
  for (const Pose& p : poses) {
    const double dx = p.x - g.x;
    const double dy = p.y - g.y;
    s.xx += dx * dx;
    s.xy += dx * dy;
    s.yy += dy * dy;
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  return {s.xx * norm, s.xy * norm, s.yy * norm};
}

double mahalanobis(Vec2 g_u, Vec2 g_z, const Mat2& sigma) {
  Mat2 s = sigma;
  if (s.eigenvalues().first < 1e-9) {
    s.xx += 1e-9;
    s.yy += 1e-9;
  }
  if (s.eigenvalues().first <= 0.0)
    throw std::invalid_argument("mahalanobis: covariance not positive definite");
  const Mat2 inv = s.inverse();
  const double dx = g_u.x - g_z.x;
  const double dy = g_u.y - g_z.y;
  const double q = dx * (inv.xx * dx + inv.xy * dy) + dy * (inv.xy * dx + inv.yy * dy);
  return std::sqrt(std::max(0.0, q));
}

FusionResult fuse(const std::vector<Pose>& p_z, Vec2 g_u, double a) {
  const Vec2 g_z = centroid(p_z);
  FusionResult out;
  out.shift = {a * (g_u.x - g_z.x), a * (g_u.y - g_z.y)};
  out.g_c = {g_z.x + out.shift.x, g_z.y + out.shift.y};
  out.p_c.reserve(p_z.size());
  for (const Pose& p : p_z) out.p_c.push_back({p.x + out.shift.x, p.y + out.shift.y, p.theta});
  return out;
}

Selection select_distribution(const std::vector<Pose>& p_z, const std::vector<double>& scores_z,
                              const FusionResult& fusion, const LidarScan& scan,
                              const LikelihoodField& field) {
  if (p_z.size() != scores_z.size() || p_z.size() != fusion.p_c.size())
    throw std::invalid_argument("select_distribution: length mismatch");

  std::vector<double> scores_c(fusion.p_c.size());
  for (size_t i = 0; i < fusion.p_c.size(); i++)
    scores_c[i] = scan_likelihood(scan, field, fusion.p_c[i]);

  const auto best_of = [](const std::vector<double>& s) {
    int idx = 0;
    for (size_t i = 1; i < s.size(); i++)
      if (s[i] > s[idx]) idx = static_cast<int>(i);
    return idx;
  };
  const int bz = best_of(scores_z);
  const int bc = best_of(scores_c);

  Selection sel;
  if (scores_c[bc] > scores_z[bz]) {
    sel.choice = 'C';
    sel.poses = fusion.p_c;
    sel.scores = std::move(scores_c);
    sel.best_index = bc;
  } else {
    sel.choice = 'Z';
    sel.poses = p_z;
    sel.scores = scores_z;
    sel.best_index = bz;
  }
  sel.best_score = sel.scores[sel.best_index];
  return sel;
}

AnalyticDetectorReport hessian_detector(const Pose& pose, const LidarScan& scan,
                                        const LikelihoodField& field) {
  AnalyticDetectorReport rep;
  rep.factor = 1.0;

  const double h[3] = {0.02, 0.02, 0.01};
  const auto eval = [&](double dx, double dy, double dt) {
    const Pose p{pose.x + dx, pose.y + dy, normalize_angle(pose.theta + dt)};
    const double s = scan_likelihood(scan, field, p);
    return s > 0.0 ? -std::log(s) : std::numeric_limits<double>::infinity();
  };

  const double f0 = eval(0, 0, 0);
  double H[3][3];
  bool finite = std::isfinite(f0);
  for (int i = 0; i < 3 && finite; i++) {
    double d[3] = {0, 0, 0};
    d[i] = h[i];
    const double fp = eval(d[0], d[1], d[2]);
    const double fm = eval(-d[0], -d[1], -d[2]);
    H[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    finite = finite && std::isfinite(fp) && std::isfinite(fm);
  }
  for (int i = 0; i < 3 && finite; i++) {
    for (int j = i + 1; j < 3 && finite; j++) {
      double di[3] = {0, 0, 0}, dj[3] = {0, 0, 0};
      di[i] = h[i];
      dj[j] = h[j];
      const double fpp = eval(di[0] + dj[0], di[1] + dj[1], di[2] + dj[2]);
      const double fpm = eval(di[0] - dj[0], di[1] - dj[1], di[2] - dj[2]);
      const double fmp = eval(-di[0] + dj[0], -di[1] + dj[1], -di[2] + dj[2]);
      const double fmm = eval(-di[0] - dj[0], -di[1] - dj[1], -di[2] - dj[2]);
      H[i][j] = H[j][i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      finite = finite && std::isfinite(fpp) && std::isfinite(fpm) && std::isfinite(fmp) &&
               std::isfinite(fmm);
    }
  }
  if (!finite) return rep;  // flat or off-field: maximally degenerate

  Eigen::Matrix3d M;
  for (int i = 0; i < 3; i++)
    for (int j = 0; j < 3; j++) {
      M(i, j) = H[i][j];
      rep.hessian[i][j] = H[i][j];
    }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(M);
  for (int i = 0; i < 3; i++) rep.eigenvalues[i] = solver.eigenvalues()(i);

  const Mat2 block{H[0][0], H[0][1], H[1][1]};
  const auto [lmin, lmax] = block.eigenvalues();
  if (!std::isfinite(lmin) || !std::isfinite(lmax) || lmax < 1e-6) {
    rep.factor = 1.0;
    return rep;
  }
  rep.factor = std::clamp(1.0 - lmin / (lmax + 1e-9), 0.0, 1.0);
  return rep;
}

}  // namespace dslam
