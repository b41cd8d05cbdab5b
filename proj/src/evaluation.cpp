#include "dslam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dslam/degeneracy.hpp"

namespace dslam {

AteResult compute_ate(const std::vector<TrajectoryPoint>& est,
                      const std::vector<TrajectoryPoint>& gt) {
  if (est.size() < 2 || gt.size() < 2)
    throw std::invalid_argument("compute_ate: need at least 2 poses per trajectory");

  std::vector<double> dts;
  for (size_t i = 1; i < gt.size(); i++) dts.push_back(gt[i].t - gt[i - 1].t);
  std::sort(dts.begin(), dts.end());
  const double tol = 0.5 * dts[dts.size() / 2];

  const Pose o = gt.front().pose;
  const double c = std::cos(-o.theta), s = std::sin(-o.theta);
  const auto anchor = [&](const Pose& p) {
    const double dx = p.x - o.x, dy = p.y - o.y;
    return Vec2{c * dx - s * dy, s * dx + c * dy};
  };

  std::vector<double> times;
  for (const TrajectoryPoint& g : gt) times.push_back(g.t);

  AteResult res;
  double sq = 0.0;
  for (const TrajectoryPoint& e : est) {
    auto it = std::lower_bound(times.begin(), times.end(), e.t);
    size_t k = it - times.begin();
    if (k == times.size() || (k > 0 && e.t - times[k - 1] <= times[k] - e.t)) k--;
    if (std::abs(times[k] - e.t) > tol) continue;
    const Vec2 pe = anchor(e.pose);
    const Vec2 pg = anchor(gt[k].pose);
    const double dx = pe.x - pg.x, dy = pe.y - pg.y;
    sq += dx * dx + dy * dy;
    res.max_dx = std::max(res.max_dx, std::abs(dx));
    res.max_dy = std::max(res.max_dy, std::abs(dy));
    res.matches++;
  }
  if (res.matches < 2) throw std::runtime_error("compute_ate: fewer than 2 matched poses");
  res.rmse = std::sqrt(sq / res.matches);
  return res;
}

DetectionMetrics detection_metrics(const std::vector<DetectionFrame>& series, double threshold) {
  if (series.empty()) throw std::invalid_argument("detection_metrics: empty series");
  DetectionMetrics m;
  int ok = 0;
  for (const DetectionFrame& f : series) {
    const bool pred = f.factor > threshold;
    if (pred == f.gt_label)
      ok++;
    else if (pred)
      m.fp++;
    else
      m.fn++;
  }
  m.success_ratio = static_cast<double>(ok) / static_cast<double>(series.size());
  return m;
}

std::vector<DetectionFrame> detection_series(const RolloutResult& rollout) {
  std::vector<DetectionFrame> out;
  out.reserve(rollout.steps.size());
  for (const StepRecord& s : rollout.steps) out.push_back({s.t, s.a, s.gt_label});
  return out;
}

namespace {

class ConstSource : public ActionSource {
 public:
  explicit ConstSource(double a) : a_(a) {}
  double act(const SwarmSnapshot&, const LidarScan&, const LikelihoodField&) override {
    return a_;
  }

 private:
  double a_;
};

class PolicySource : public ActionSource {
 public:
  explicit PolicySource(AgentParams params) : params_(std::move(params)) {}
  double act(const SwarmSnapshot& snap, const LidarScan&, const LikelihoodField&) override {
    return policy_forward(params_, build_state(snap, params_.spec.particles())).mu;
  }

 private:
  AgentParams params_;
};

class CurvatureSource : public ActionSource {
 public:
  double act(const SwarmSnapshot& snap, const LidarScan& scan,
             const LikelihoodField& field) override {
    size_t best = 0;
    for (size_t i = 1; i < snap.scores_z.size(); i++)
      if (snap.scores_z[i] > snap.scores_z[best]) best = i;
    return hessian_detector(snap.p_z[best], scan, field).factor;
  }
};

}  // namespace

std::unique_ptr<ActionSource> make_action_source(const std::string& mode,
                                                 const std::string& checkpoint) {
  if (mode == "vanilla") return std::make_unique<ConstSource>(0.0);
  if (mode == "analytic-baseline") return std::make_unique<CurvatureSource>();
  if (mode == "doa") {
    if (checkpoint.empty()) throw std::invalid_argument("doa mode needs a checkpoint");
    return std::make_unique<PolicySource>(load_checkpoint(checkpoint));
  }
  if (mode.rfind("constant:", 0) == 0) {
    size_t used = 0;
    const std::string arg = mode.substr(9);
    double a = 0.0;
    try {
      a = std::stod(arg, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad constant factor: " + arg);
    }
    if (used != arg.size() || a < 0.0 || a > 1.0)
      throw std::invalid_argument("constant factor must be in [0, 1]: " + arg);
    return std::make_unique<ConstSource>(a);
  }
  throw std::invalid_argument("unknown eval mode: " + mode);
}

namespace {

std::vector<TrajectoryPoint> stamped(const std::vector<StepRecord>& steps, bool ground_truth) {
  std::vector<TrajectoryPoint> out;
  out.reserve(steps.size());
  for (const StepRecord& s : steps) out.push_back({s.t, ground_truth ? s.gt : s.est});
  return out;
}

void write_seed_artifacts(const EvalConfig& cfg, uint64_t seed, const RolloutResult& rollout) {
  const std::string stem = cfg.out_dir + "/seed" + std::to_string(seed);
  write_pgm(rollout.map, stem + ".map.pgm");
  write_trajectory(stem + ".est.tum", stamped(rollout.steps, false));
  write_trajectory(stem + ".gt.tum", stamped(rollout.steps, true));

  PlotSeries factor{"factor a", {}, {}};
  PlotSeries label{"degenerate region", {}, {}};
  PlotSeries thresh{"threshold", {}, {}};
  for (const StepRecord& s : rollout.steps) {
    factor.x.push_back(s.t);
    factor.y.push_back(s.a);
    label.x.push_back(s.t);
    label.y.push_back(s.gt_label ? 1.0 : 0.0);
    thresh.x.push_back(s.t);
    thresh.y.push_back(cfg.detection_threshold);
  }
  write_svg_plot(stem + ".factor.svg", {factor, label, thresh},
                 "degeneracy factor, seed " + std::to_string(seed), "time [s]", "factor",
                 /*band=*/false);
}

SeedEvalRow eval_one_seed(const EvalConfig& cfg, const WorldModel& world, uint64_t seed) {
  std::unique_ptr<ActionSource> source = make_action_source(cfg.mode, cfg.checkpoint);
  const RolloutResult rollout = run_rollout(world, cfg.rollout, *source, seed);

  const AteResult ate = compute_ate(stamped(rollout.steps, false), stamped(rollout.steps, true));
  const std::vector<DetectionFrame> frames = detection_series(rollout);
  const DetectionMetrics det = detection_metrics(frames, cfg.detection_threshold);

  SeedEvalRow row;
  row.seed = seed;
  row.ate = ate.rmse;
  row.max_dx = ate.max_dx;
  row.max_dy = ate.max_dy;
  row.resamples = rollout.resamples;
  row.mean_neff = rollout.mean_neff;
  row.success_ratio = det.success_ratio;
  for (const DetectionFrame& f : frames) row.degenerate_frames += f.gt_label ? 1 : 0;

  if (cfg.artifacts) write_seed_artifacts(cfg, seed, rollout);
  return row;
}

}  // namespace

EvalResult run_eval(const EvalConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("run_eval: no seeds");
  make_action_source(cfg.mode, cfg.checkpoint);  // fail fast on a bad mode/checkpoint
  std::filesystem::create_directories(cfg.out_dir);
  const WorldModel world = resolve_world(cfg.world);

  EvalResult result;
  result.rows.resize(cfg.seeds.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t stride = std::max<size_t>(1, (cfg.seeds.size() + hw - 1) / hw);
  std::vector<std::thread> workers;
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (size_t begin = 0; begin < cfg.seeds.size(); begin += stride) {
    const size_t end = std::min(cfg.seeds.size(), begin + stride);
    workers.emplace_back([&, begin, end] {
      for (size_t i = begin; i < end; i++) {
        try {
          result.rows[i] = eval_one_seed(cfg, world, cfg.seeds[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::ostringstream csv;
  csv << "seed,ate,max_dx,max_dy,resamples,mean_neff,success_ratio,degenerate_frames\n";
  for (const SeedEvalRow& r : result.rows)
    csv << r.seed << "," << fmt_num(r.ate) << "," << fmt_num(r.max_dx) << ","
        << fmt_num(r.max_dy) << "," << r.resamples << "," << fmt_num(r.mean_neff) << ","
        << fmt_num(r.success_ratio) << "," << r.degenerate_frames << "\n";
  result.csv = csv.str();
  write_text(cfg.out_dir + "/eval.csv", result.csv);
  return result;
}

}  // namespace dslam
