#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "dslam/agent.hpp"
#include "dslam/filter.hpp"
#include "dslam/world.hpp"

namespace dslam {

/// Where the episode world comes from: an explicit file wins over a generator
/// spec. kind "toy" (training only) selects the SLAM-free sanity bandit with
/// reward 1 - (a - 0.7)^2 instead of a world.
struct WorldSpec {
  std::string path;
  std::string kind = "room";
  WorldGenParams gen;
  uint64_t gen_seed = 0;
};

WorldModel resolve_world(const WorldSpec& spec);

/// Simulation + filter knobs shared by training episodes and evaluation runs.
struct RolloutSettings {
  int timesteps = 200;
  double speed = 0.3;
  double dt = 0.25;
  double waypoint_radius = 0.3;
  LidarSpec lidar;
  OdomNoise sim_odom;
  SlamConfig slam;
};

/// Supplies the degeneracy factor for one step, given everything the filter
/// knows at decision time.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual double act(const SwarmSnapshot& snap, const LidarScan& scan,
                     const LikelihoodField& field) = 0;
};

struct StepRecord {
  double t = 0.0;
  Pose gt, est;
  double a = 0.0;
  double n_eff = 0.0;
  double sigma_x2 = 0.0, sigma_y2 = 0.0;
  double score = 0.0;
  bool resampled = false;
  char selected = 'Z';
  bool gt_label = false;  // inside a degenerate region
};

struct RolloutResult {
  std::vector<StepRecord> steps;
  double ate_rmse = 0.0;
  double max_dx = 0.0, max_dy = 0.0;
  int resamples = 0;
  double mean_neff = 0.0;
  OccupancyGrid map;
  std::vector<Pose> est_traj, gt_traj;
};

/// Drives the robot along the world's waypoint cycle for settings.timesteps
/// SLAM updates. Fully deterministic in (world, settings, seed, source).
RolloutResult run_rollout(const WorldModel& world, const RolloutSettings& settings,
                          ActionSource& source, uint64_t seed);

struct TrainConfig {
  WorldSpec world;
  RolloutSettings rollout;
  int episodes = 1000;
  double lr = 0.002;
  double gamma = 0.98;
  double clip = 0.2;
  int epochs = 5;
  double gae_lambda = 0.95;
  uint64_t seed = 1;
  bool critic_enabled = true;
  std::string source_checkpoint;      // transfer source; empty = from scratch
  std::string freeze_scope = "none";  // none | backbone | backbone+neck
  std::string ablation_tag;           // E1..E6 presets, applied on top
  NetworkSpec net;
  RewardWeights reward;
  std::string out_dir = "out";

  PpoConfig ppo() const;
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

/// E1: transfer, frozen backbone. E2: from scratch. E3/E4: E1/E2 without the
/// critic. E5: transfer, frozen backbone and neck. E6: transfer with an
/// unshared critic backbone.
void apply_ablation(TrainConfig& cfg);

struct EpisodeLog {
  int episode = 0;
  double cum_reward = 0.0;
  double mean_a = 0.0;
  double mean_neff = 0.0;
  int resamples = 0;
  double ate = 0.0;
};

struct EpisodeOutput {
  RolloutBuffer buffer;
  EpisodeLog log;
  RolloutResult rollout;
};

/// One training episode: scripted waypoint traversal where each timestep is a
/// SLAM update; the agent's sampled action feeds the factor provider and the
/// reward is assembled from that step's covariance, score, n_eff and action
/// churn.
EpisodeOutput run_episode(const TrainConfig& cfg, const WorldModel& world, AgentParams& agent,
                          int episode_index);

struct TrainResult {
  std::vector<EpisodeLog> logs;
  std::string best_checkpoint;
  std::string final_checkpoint;
  double best_mean_reward = 0.0;
  int best_episode = -1;
};

/// Full training loop; writes log.csv, reward_curve.csv, best/final
/// checkpoints, and a manifest under cfg.out_dir.
TrainResult train(const TrainConfig& cfg);

/// Loads the source checkpoint, freezes per cfg.freeze_scope (default
/// backbone), and trains on the configured world.
TrainResult transfer_train(const std::string& source_ckpt, TrainConfig cfg);

}  // namespace dslam
