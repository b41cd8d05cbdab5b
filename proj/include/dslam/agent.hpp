#pragma once

#include <string>
#include <vector>

#include "dslam/filter.hpp"
#include "dslam/net.hpp"

namespace dslam {

/// Layer widths of the actor-critic. The default matches the deployed
/// network; tests shrink everything to exercise the same code paths cheaply.
struct NetworkSpec {
  std::vector<int> backbone{120, 60, 128, 256, 256};
  std::vector<int> neck{256, 192, 128};
  int attn_heads = 3;
  int attn_head_dim = 64;
  int attn_out = 64;
  std::vector<int> policy{64, 32, 1};
  std::vector<int> critic{256, 128, 64, 32, 1};
  bool critic_shared = true;  // false gives the critic its own backbone

  int input_dim() const { return backbone.front(); }
  int particles() const { return backbone.front() / 4; }
};

struct AgentParams {
  NetworkSpec spec;
  nn::Mlp backbone;  // ReLU after every layer
  nn::Mlp neck;      // ReLU after every layer
  nn::SingleTokenAttention attn;
  nn::Mlp policy_head;  // ReLU inside, linear out; logistic applied by caller
  nn::Param log_std;    // scalar, init -1
  nn::Mlp critic_head;  // attached at backbone output
  nn::Mlp critic_backbone;  // only built when !spec.critic_shared
  int adam_t = 0;

  static AgentParams make(const NetworkSpec& spec, uint64_t seed);

  /// Fresh pointer registry over every tensor (ordering is the checkpoint
  /// ordering). Built per call so moves never leave dangling pointers.
  std::vector<nn::Param*> registry();
};

/// Flattens a swarm snapshot to [x_z.., y_z.., x_u.., y_u..], centered on the
/// combined 2N-point centroid and scaled by 1/5 m.
std::vector<double> build_state(const SwarmSnapshot& snap, int expected_particles = 30);

struct PolicyOut {
  double mu = 0.5;      // logistic(mean_z)
  double mean_z = 0.0;  // pre-squash mean
  double sigma = 0.0;   // exp(log_std)
};

PolicyOut policy_forward(AgentParams& params, const std::vector<double>& state);
double critic_forward(AgentParams& params, const std::vector<double>& state);

struct ActionSample {
  double a = 0.5;   // in [1e-6, 1 - 1e-6]
  double z = 0.0;   // pre-squash draw, kept consistent with the clamp
  double log_prob = 0.0;
};

/// a = logistic(z), z ~ Normal(mean_z, sigma); log_prob carries the squash
/// correction -log(a(1-a)).
ActionSample sample_action(const PolicyOut& dist, Rng& rng);
double action_log_prob(double z, double a, double mean_z, double sigma);

struct RewardWeights {
  double b1 = 0.3, b2 = 0.3, b3 = 0.2, b4 = 0.2;
};

/// R = b1 exp(-(sx2+sy2)/3) + b2 s + b3 neff/N - b4 (a_t - a_prev)^2.
double compute_reward(double sigma_x2, double sigma_y2, double score, double neff,
                      int n_particles, double a_t, double a_prev, const RewardWeights& beta);

struct TransitionRecord {
  std::vector<double> state;
  double action = 0.0;
  double z = 0.0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<TransitionRecord> transitions;

  int size() const { return static_cast<int>(transitions.size()); }
};

struct AdvantageResult {
  std::vector<double> raw;           // GAE before standardization
  std::vector<double> standardized;  // zero mean, unit variance
  std::vector<double> returns;       // raw + value, the critic targets
};

AdvantageResult compute_advantages(const RolloutBuffer& buffer, double gamma = 0.98,
                                   double lambda = 0.95);

struct PpoConfig {
  double lr = 0.002;
  double clip = 0.2;
  int epochs = 5;
  double gamma = 0.98;
  double lambda = 0.95;
  double value_coeff = 0.5;
  double entropy_coeff = 0.01;
  bool critic_enabled = true;  // false: standardized discounted returns as advantages
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total_loss = 0.0;  // of the last epoch
  bool aborted = false;
};

/// Total clipped-surrogate loss (policy + value_coeff * value - entropy_coeff
/// * entropy) without touching parameters; the finite-difference reference for
/// ppo_backward.
double ppo_loss(AgentParams& params, const RolloutBuffer& buffer, const AdvantageResult& adv,
                const PpoConfig& cfg);

/// Single forward/backward filling parameter gradients; returns the loss
/// decomposition. Gradients accumulate on top of whatever is in the buffers.
PpoStats ppo_backward(AgentParams& params, const RolloutBuffer& buffer,
                      const AdvantageResult& adv, const PpoConfig& cfg);

/// Full update: epochs x (backward + Adam) against old log-probs fixed in the
/// buffer. A non-finite loss aborts before any parameter change that epoch.
PpoStats ppo_update(AgentParams& params, const RolloutBuffer& buffer, const PpoConfig& cfg);

enum class FreezeScope { none, backbone, backbone_neck };

/// backbone: backbone tensors (both backbones when the critic has its own).
/// backbone_neck: everything except the two heads and log_std.
void freeze(AgentParams& params, FreezeScope scope);

void save_checkpoint(AgentParams& params, const std::string& path, int episode,
                     double mean_reward);
AgentParams load_checkpoint(const std::string& path);

}  // namespace dslam
