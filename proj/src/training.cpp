#include "dslam/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dslam/export.hpp"

namespace dslam {

WorldModel resolve_world(const WorldSpec& spec) {
  if (!spec.path.empty()) return load_world(spec.path);
  return generate_world(spec.kind, spec.gen, spec.gen_seed);
}

namespace {

struct WaypointController {
  const std::vector<Vec2>* wps = nullptr;
  double radius = 0.3;
  double speed = 0.3;
  size_t target = 1;

  std::pair<double, double> command(const Pose& p) {
    const Vec2* w = &(*wps)[target % wps->size()];
    if (std::hypot(w->x - p.x, w->y - p.y) < radius) {
      target++;
      w = &(*wps)[target % wps->size()];
    }
    const double err = normalize_angle(std::atan2(w->y - p.y, w->x - p.x) - p.theta);
    const double omega = std::clamp(2.0 * err, -1.5, 1.5);
    const double v = std::abs(err) < kPi / 3.0 ? speed : 0.0;
    return {v, omega};
  }
};

}  // namespace

RolloutResult run_rollout(const WorldModel& world, const RolloutSettings& settings,
                          ActionSource& source, uint64_t seed) {
  if (world.waypoints.size() < 2) throw std::invalid_argument("rollout needs >= 2 waypoints");
  if (settings.timesteps <= 0 || settings.speed <= 0.0 || settings.dt <= 0.0)
    throw std::invalid_argument("rollout settings out of range");

  const Vec2& w0 = world.waypoints[0];
  const Vec2& w1 = world.waypoints[1];
  const Pose start{w0.x, w0.y, std::atan2(w1.y - w0.y, w1.x - w0.x)};

  SlamState slam(settings.slam, world.grid.geom, start, mix_seed(seed, 0x51a3));
  Rng sim_rng(mix_seed(seed, 0x5139));
  GroundTruthState gt;
  gt.pose = start;
  slam.bootstrap(simulate_scan(world, gt.pose, settings.lidar, sim_rng));

  WaypointController ctl{&world.waypoints, settings.waypoint_radius, settings.speed};

  RolloutResult res;
  res.steps.reserve(settings.timesteps);
  double neff_sum = 0.0, sq_sum = 0.0;
  for (int t = 0; t < settings.timesteps; t++) {
    const auto [v, omega] = ctl.command(gt.pose);
    const GroundTruthState prev = gt;
    gt = step_robot(world, gt, v, omega, settings.dt);
    const OdometryReading u = odometry_from_motion(prev, gt, settings.sim_odom, sim_rng);
    const LidarScan scan = simulate_scan(world, gt.pose, settings.lidar, sim_rng);

    const StepResult sr = slam_step(slam, u, scan, [&](const SwarmSnapshot& snap) {
      return source.act(snap, scan, slam.field);
    });

    StepRecord rec;
    rec.t = gt.time;
    rec.gt = gt.pose;
    rec.est = sr.estimate;
    rec.a = sr.a;
    rec.n_eff = sr.n_eff;
    rec.sigma_x2 = sr.sigma_xt.xx;
    rec.sigma_y2 = sr.sigma_xt.yy;
    rec.score = sr.best_score;
    rec.resampled = sr.resampled;
    rec.selected = sr.selected;
    rec.gt_label = gt_degenerate(world, gt.pose);
    res.steps.push_back(rec);
    res.gt_traj.push_back(gt.pose);
    res.est_traj.push_back(sr.estimate);
    if (sr.resampled) res.resamples++;
    neff_sum += sr.n_eff;

    const double dx = sr.estimate.x - gt.pose.x;
    const double dy = sr.estimate.y - gt.pose.y;
    sq_sum += dx * dx + dy * dy;
    res.max_dx = std::max(res.max_dx, std::abs(dx));
    res.max_dy = std::max(res.max_dy, std::abs(dy));
  }
  res.ate_rmse = std::sqrt(sq_sum / settings.timesteps);
  res.mean_neff = neff_sum / settings.timesteps;
  res.map = std::move(slam.map);
  return res;
}

PpoConfig TrainConfig::ppo() const {
  PpoConfig p;
  p.lr = lr;
  p.clip = clip;
  p.epochs = epochs;
  p.gamma = gamma;
  p.lambda = gae_lambda;
  p.critic_enabled = critic_enabled;
  return p;
}

void apply_ablation(TrainConfig& cfg) {
  if (cfg.ablation_tag.empty()) return;
  const std::string& tag = cfg.ablation_tag;
  if (tag == "E1") {
    cfg.critic_enabled = true;
    cfg.freeze_scope = "backbone";
  } else if (tag == "E2") {
    cfg.critic_enabled = true;
    cfg.source_checkpoint.clear();
    cfg.freeze_scope = "none";
  } else if (tag == "E3") {
    cfg.critic_enabled = false;
    cfg.freeze_scope = "backbone";
  } else if (tag == "E4") {
    cfg.critic_enabled = false;
    cfg.source_checkpoint.clear();
    cfg.freeze_scope = "none";
  } else if (tag == "E5") {
    cfg.critic_enabled = true;
    cfg.freeze_scope = "backbone+neck";
  } else if (tag == "E6") {
    cfg.critic_enabled = true;
    cfg.freeze_scope = "backbone";
    cfg.net.critic_shared = false;
  } else {
    throw std::invalid_argument("unknown ablation tag " + tag);
  }
}

namespace {

class TrainingSource : public ActionSource {
 public:
  TrainingSource(AgentParams& agent, Rng& rng, bool critic_enabled, RolloutBuffer& buffer)
      : agent_(agent), rng_(rng), critic_enabled_(critic_enabled), buffer_(buffer) {}

  double act(const SwarmSnapshot& snap, const LidarScan&, const LikelihoodField&) override {
    TransitionRecord tr;
    tr.state = build_state(snap, agent_.spec.particles());
    const PolicyOut out = policy_forward(agent_, tr.state);
    const ActionSample s = sample_action(out, rng_);
    tr.action = s.a;
    tr.z = s.z;
    tr.log_prob = s.log_prob;
    tr.value = critic_enabled_ ? critic_forward(agent_, tr.state) : 0.0;
    buffer_.transitions.push_back(std::move(tr));
    return s.a;
  }

 private:
  AgentParams& agent_;
  Rng& rng_;
  bool critic_enabled_;
  RolloutBuffer& buffer_;
};

FreezeScope parse_freeze_scope(const std::string& s) {
  if (s.empty() || s == "none") return FreezeScope::none;
  if (s == "backbone") return FreezeScope::backbone;
  if (s == "backbone+neck") return FreezeScope::backbone_neck;
  throw std::invalid_argument("unknown freeze scope: " + s);
}

/// Clones a shared-critic agent into one whose critic owns a copy of the
/// backbone, so a pretrained checkpoint can seed the heterogeneous variant.
AgentParams split_critic_backbone(AgentParams& src) {
  NetworkSpec spec = src.spec;
  spec.critic_shared = false;
  AgentParams dst = AgentParams::make(spec, 0);
  std::map<std::string, nn::Param*> by_name;
  for (nn::Param* p : src.registry()) by_name[p->name] = p;
  for (nn::Param* p : dst.registry()) {
    std::string key = p->name;
    if (key.rfind("crbb.", 0) == 0) key = "bb." + key.substr(5);
    auto it = by_name.find(key);
    if (it == by_name.end()) throw std::logic_error("missing source tensor " + key);
    p->value = it->second->value;
  }
  return dst;
}

bool is_toy(const TrainConfig& cfg) { return cfg.world.path.empty() && cfg.world.kind == "toy"; }

AgentParams build_agent(const TrainConfig& cfg) {
  const int want = 4 * cfg.rollout.slam.n_particles;
  if (!cfg.source_checkpoint.empty()) {
    AgentParams loaded = load_checkpoint(cfg.source_checkpoint);
    if (!is_toy(cfg) && loaded.spec.input_dim() != want)
      throw std::invalid_argument("checkpoint input width does not match particle count");
    if (!cfg.net.critic_shared && loaded.spec.critic_shared)
      loaded = split_critic_backbone(loaded);
    freeze(loaded, parse_freeze_scope(cfg.freeze_scope));
    return loaded;
  }
  NetworkSpec spec = cfg.net;
  if (!is_toy(cfg) && spec.input_dim() != want) spec.backbone.front() = want;
  AgentParams agent = AgentParams::make(spec, mix_seed(cfg.seed, 0x11e7));
  freeze(agent, parse_freeze_scope(cfg.freeze_scope));
  return agent;
}

/// SLAM-free stationary bandit: states are pure noise, reward 1 - (a - 0.7)^2.
/// Exercises the full rollout-buffer / PPO path with a known optimum.
EpisodeOutput run_toy_episode(const TrainConfig& cfg, AgentParams& agent, int episode_index) {
  Rng action_rng(mix_seed(cfg.seed, 0x200000u + static_cast<uint64_t>(episode_index)));
  Rng state_rng(mix_seed(cfg.seed, 0x300000u + static_cast<uint64_t>(episode_index)));
  EpisodeOutput out;
  double cum = 0.0, a_sum = 0.0;
  for (int t = 0; t < cfg.rollout.timesteps; t++) {
    TransitionRecord tr;
    tr.state.resize(agent.spec.input_dim());
    for (double& v : tr.state) v = state_rng.gauss();
    const PolicyOut pol = policy_forward(agent, tr.state);
    const ActionSample s = sample_action(pol, action_rng);
    tr.action = s.a;
    tr.z = s.z;
    tr.log_prob = s.log_prob;
    tr.value = cfg.critic_enabled ? critic_forward(agent, tr.state) : 0.0;
    tr.reward = 1.0 - (s.a - 0.7) * (s.a - 0.7);
    cum += tr.reward;
    a_sum += s.a;
    out.buffer.transitions.push_back(std::move(tr));
  }
  if (!out.buffer.transitions.empty()) out.buffer.transitions.back().done = true;
  out.log.episode = episode_index;
  out.log.cum_reward = cum;
  out.log.mean_a = out.buffer.transitions.empty()
                       ? 0.0
                       : a_sum / static_cast<double>(out.buffer.transitions.size());
  return out;
}

}  // namespace

EpisodeOutput run_episode(const TrainConfig& cfg, const WorldModel& world, AgentParams& agent,
                          int episode_index) {
  if (is_toy(cfg)) return run_toy_episode(cfg, agent, episode_index);
  if (agent.spec.input_dim() != 4 * cfg.rollout.slam.n_particles)
    throw std::invalid_argument("agent input width does not match particle count");

  Rng action_rng(mix_seed(cfg.seed, 0x200000u + static_cast<uint64_t>(episode_index)));
  EpisodeOutput out;
  TrainingSource source(agent, action_rng, cfg.critic_enabled, out.buffer);
  out.rollout = run_rollout(world, cfg.rollout, source,
                            mix_seed(cfg.seed, 0x100000u + static_cast<uint64_t>(episode_index)));

  auto& trs = out.buffer.transitions;
  if (trs.size() != out.rollout.steps.size())
    throw std::logic_error("expected one agent decision per filter update");

  double cum = 0.0, a_sum = 0.0;
  double a_prev = trs.empty() ? 0.0 : trs.front().action;
  for (size_t i = 0; i < trs.size(); i++) {
    const StepRecord& st = out.rollout.steps[i];
    trs[i].reward = compute_reward(st.sigma_x2, st.sigma_y2, st.score, st.n_eff,
                                   cfg.rollout.slam.n_particles, trs[i].action, a_prev, cfg.reward);
    a_prev = trs[i].action;
    cum += trs[i].reward;
    a_sum += trs[i].action;
  }
  if (!trs.empty()) trs.back().done = true;

  out.log.episode = episode_index;
  out.log.cum_reward = cum;
  out.log.mean_a = trs.empty() ? 0.0 : a_sum / static_cast<double>(trs.size());
  out.log.mean_neff = out.rollout.mean_neff;
  out.log.resamples = out.rollout.resamples;
  out.log.ate = out.rollout.ate_rmse;
  return out;
}

TrainResult train(const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  apply_ablation(cfg);
  if (cfg.episodes <= 0) throw std::invalid_argument("episodes must be positive");
  std::filesystem::create_directories(cfg.out_dir);

  const WorldModel world = is_toy(cfg) ? WorldModel{} : resolve_world(cfg.world);
  AgentParams agent = build_agent(cfg);
  const PpoConfig ppo = cfg.ppo();

  TrainResult result;
  AgentParams best = agent;
  double best_cum = -std::numeric_limits<double>::infinity();

  std::ostringstream log_csv;
  log_csv << "episode,cum_reward,mean_a,mean_neff,resamples,ate\n";

  double last_mean = 0.0;
  for (int ep = 0; ep < cfg.episodes; ep++) {
    EpisodeOutput out = run_episode(cfg, world, agent, ep);
    if (out.log.cum_reward > best_cum) {
      best_cum = out.log.cum_reward;
      result.best_episode = ep;
      result.best_mean_reward = out.log.cum_reward / out.buffer.size();
      best = agent;  // the weights that produced the peak episode
    }
    last_mean = out.log.cum_reward / out.buffer.size();

    const PpoStats stats = ppo_update(agent, out.buffer, ppo);
    if (stats.aborted)
      throw std::runtime_error("non-finite training loss at episode " + std::to_string(ep));

    result.logs.push_back(out.log);
    log_csv << out.log.episode << "," << fmt_num(out.log.cum_reward) << ","
            << fmt_num(out.log.mean_a) << "," << fmt_num(out.log.mean_neff) << ","
            << out.log.resamples << "," << fmt_num(out.log.ate) << "\n";
  }
  write_text(cfg.out_dir + "/log.csv", log_csv.str());

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const EpisodeLog& l : result.logs) {
    lo = std::min(lo, l.cum_reward);
    hi = std::max(hi, l.cum_reward);
  }
  double span = hi - lo;
  if (span < 1e-12) span = 1.0;
  std::ostringstream curve;
  curve << "episode,cum_reward,normalized\n";
  for (const EpisodeLog& l : result.logs)
    curve << l.episode << "," << fmt_num(l.cum_reward) << ","
          << fmt_num((l.cum_reward - lo) / span) << "\n";
  write_text(cfg.out_dir + "/reward_curve.csv", curve.str());

  result.best_checkpoint = cfg.out_dir + "/best.ckpt.json";
  result.final_checkpoint = cfg.out_dir + "/final.ckpt.json";
  save_checkpoint(best, result.best_checkpoint, result.best_episode, result.best_mean_reward);
  save_checkpoint(agent, result.final_checkpoint, cfg.episodes - 1, last_mean);
  return result;
}

TrainResult transfer_train(const std::string& source_ckpt, TrainConfig cfg) {
  cfg.source_checkpoint = source_ckpt;
  if (parse_freeze_scope(cfg.freeze_scope) == FreezeScope::none) cfg.freeze_scope = "backbone";
  return train(cfg);
}

namespace {

using json = nlohmann::ordered_json;

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void noise_from_json(const json& j, const char* key, OdomNoise& n) {
  if (!j.contains(key)) return;
  std::vector<double> v = j.at(key).get<std::vector<double>>();
  if (v.size() != 4) throw std::runtime_error(std::string(key) + " needs 4 entries");
  n = {v[0], v[1], v[2], v[3]};
}

json noise_to_json(const OdomNoise& n) { return json::array({n.a1, n.a2, n.a3, n.a4}); }

}  // namespace

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["world"] = {{"path", cfg.world.path},
                {"kind", cfg.world.kind},
                {"gen_seed", cfg.world.gen_seed},
                {"params",
                 {{"resolution", cfg.world.gen.resolution},
                  {"room_w", cfg.world.gen.room_w},
                  {"room_h", cfg.world.gen.room_h},
                  {"obstacles", cfg.world.gen.obstacles},
                  {"corridor_len", cfg.world.gen.corridor_len},
                  {"corridor_width", cfg.world.gen.corridor_width},
                  {"corridor_features", cfg.world.gen.corridor_features}}}};
  j["episodes"] = cfg.episodes;
  j["timesteps"] = cfg.rollout.timesteps;
  j["lr"] = cfg.lr;
  j["gamma"] = cfg.gamma;
  j["clip"] = cfg.clip;
  j["epochs"] = cfg.epochs;
  j["gae_lambda"] = cfg.gae_lambda;
  j["robot_speed"] = cfg.rollout.speed;
  j["dt"] = cfg.rollout.dt;
  j["waypoint_radius"] = cfg.rollout.waypoint_radius;
  j["seed"] = cfg.seed;
  j["critic_enabled"] = cfg.critic_enabled;
  j["transfer"] = {{"source_checkpoint", cfg.source_checkpoint},
                   {"freeze_scope", cfg.freeze_scope}};
  j["ablation_tag"] = cfg.ablation_tag;
  j["n_particles"] = cfg.rollout.slam.n_particles;
  j["lidar"] = {{"n_beams", cfg.rollout.lidar.n_beams},
                {"fov", cfg.rollout.lidar.fov},
                {"max_range", cfg.rollout.lidar.max_range},
                {"range_sigma", cfg.rollout.lidar.range_sigma}};
  j["sim_odom_noise"] = noise_to_json(cfg.rollout.sim_odom);
  j["filter_odom_noise"] = noise_to_json(cfg.rollout.slam.odom_noise);
  j["sigma_hit"] = cfg.rollout.slam.sigma_hit;
  j["field_rebuild_period"] = cfg.rollout.slam.field_rebuild_period;
  j["resample_fraction"] = cfg.rollout.slam.resample_fraction;
  j["net"] = {{"backbone", cfg.net.backbone},
              {"neck", cfg.net.neck},
              {"attn_heads", cfg.net.attn_heads},
              {"attn_head_dim", cfg.net.attn_head_dim},
              {"attn_out", cfg.net.attn_out},
              {"policy", cfg.net.policy},
              {"critic", cfg.net.critic},
              {"critic_shared", cfg.net.critic_shared}};
  j["reward"] = {cfg.reward.b1, cfg.reward.b2, cfg.reward.b3, cfg.reward.b4};
  j["out_dir"] = cfg.out_dir;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (j.contains("world")) {
    const json& w = j.at("world");
    maybe(w, "path", cfg.world.path);
    maybe(w, "kind", cfg.world.kind);
    maybe(w, "gen_seed", cfg.world.gen_seed);
    if (w.contains("params")) {
      const json& p = w.at("params");
      maybe(p, "resolution", cfg.world.gen.resolution);
      maybe(p, "room_w", cfg.world.gen.room_w);
      maybe(p, "room_h", cfg.world.gen.room_h);
      maybe(p, "obstacles", cfg.world.gen.obstacles);
      maybe(p, "corridor_len", cfg.world.gen.corridor_len);
      maybe(p, "corridor_width", cfg.world.gen.corridor_width);
      maybe(p, "corridor_features", cfg.world.gen.corridor_features);
    }
  }
  maybe(j, "episodes", cfg.episodes);
  maybe(j, "timesteps", cfg.rollout.timesteps);
  maybe(j, "lr", cfg.lr);
  maybe(j, "gamma", cfg.gamma);
  maybe(j, "clip", cfg.clip);
  maybe(j, "epochs", cfg.epochs);
  maybe(j, "gae_lambda", cfg.gae_lambda);
  maybe(j, "robot_speed", cfg.rollout.speed);
  maybe(j, "dt", cfg.rollout.dt);
  maybe(j, "waypoint_radius", cfg.rollout.waypoint_radius);
  maybe(j, "seed", cfg.seed);
  maybe(j, "critic_enabled", cfg.critic_enabled);
  if (j.contains("transfer")) {
    maybe(j.at("transfer"), "source_checkpoint", cfg.source_checkpoint);
    maybe(j.at("transfer"), "freeze_scope", cfg.freeze_scope);
  }
  maybe(j, "ablation_tag", cfg.ablation_tag);
  maybe(j, "n_particles", cfg.rollout.slam.n_particles);
  if (j.contains("lidar")) {
    const json& l = j.at("lidar");
    maybe(l, "n_beams", cfg.rollout.lidar.n_beams);
    maybe(l, "fov", cfg.rollout.lidar.fov);
    maybe(l, "max_range", cfg.rollout.lidar.max_range);
    maybe(l, "range_sigma", cfg.rollout.lidar.range_sigma);
  }
  noise_from_json(j, "sim_odom_noise", cfg.rollout.sim_odom);
  noise_from_json(j, "filter_odom_noise", cfg.rollout.slam.odom_noise);
  maybe(j, "sigma_hit", cfg.rollout.slam.sigma_hit);
  maybe(j, "field_rebuild_period", cfg.rollout.slam.field_rebuild_period);
  maybe(j, "resample_fraction", cfg.rollout.slam.resample_fraction);
  if (j.contains("net")) {
    const json& n = j.at("net");
    maybe(n, "backbone", cfg.net.backbone);
    maybe(n, "neck", cfg.net.neck);
    maybe(n, "attn_heads", cfg.net.attn_heads);
    maybe(n, "attn_head_dim", cfg.net.attn_head_dim);
    maybe(n, "attn_out", cfg.net.attn_out);
    maybe(n, "policy", cfg.net.policy);
    maybe(n, "critic", cfg.net.critic);
    maybe(n, "critic_shared", cfg.net.critic_shared);
  }
  if (j.contains("reward")) {
    std::vector<double> r = j.at("reward").get<std::vector<double>>();
    if (r.size() != 4) throw std::runtime_error("reward needs 4 weights");
    cfg.reward = {r[0], r[1], r[2], r[3]};
  }
  maybe(j, "out_dir", cfg.out_dir);
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
  try {
    return train_config_from_json(j);
  } catch (const json::exception& e) {
    throw std::runtime_error("config " + path + ": " + e.what());
  }
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
  write_text(path, train_config_to_json(cfg).dump(1) + "\n");
}

}  // namespace dslam
