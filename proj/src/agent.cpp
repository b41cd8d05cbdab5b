#include "dslam/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dslam {

namespace {

using json = nlohmann::ordered_json;

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void check_spec(const NetworkSpec& s) {
  if (s.backbone.size() < 2 || s.neck.size() < 2 || s.policy.size() < 2 || s.critic.size() < 2)
    throw std::invalid_argument("network spec: every block needs at least one layer");
  if (s.backbone.front() % 4 != 0)
    throw std::invalid_argument("network spec: input width must be 4x particle count");
  if (s.neck.front() != s.backbone.back())
    throw std::invalid_argument("network spec: neck input must match backbone output");
  if (s.policy.front() != s.attn_out)
    throw std::invalid_argument("network spec: policy head input must match attention output");
  if (s.critic.front() != s.backbone.back())
    throw std::invalid_argument("network spec: critic input must match backbone output");
  if (s.policy.back() != 1 || s.critic.back() != 1)
    throw std::invalid_argument("network spec: heads must end in width 1");
  if (s.attn_heads < 1 || s.attn_head_dim < 1)
    throw std::invalid_argument("network spec: invalid attention dims");
}

}  // namespace

AgentParams AgentParams::make(const NetworkSpec& spec, uint64_t seed) {
  check_spec(spec);
  AgentParams p;
  p.spec = spec;
  Rng rng(mix_seed(seed, 0xa6e27));
  p.backbone.init("bb", spec.backbone, true, rng);
  p.neck.init("neck", spec.neck, true, rng);
  p.attn.init("attn", spec.neck.back(), spec.attn_heads, spec.attn_head_dim, spec.attn_out, rng);
  p.policy_head.init("pol", spec.policy, false, rng);
  p.log_std.init("log_std", 1, 1);
  p.log_std.value(0, 0) = -1.0;
  p.critic_head.init("cr", spec.critic, false, rng);
  if (!spec.critic_shared) p.critic_backbone.init("crbb", spec.backbone, true, rng);
  return p;
}

std::vector<nn::Param*> AgentParams::registry() {
  std::vector<nn::Param*> out;
  backbone.collect(out);
  neck.collect(out);
  attn.collect(out);
  policy_head.collect(out);
  out.push_back(&log_std);
  critic_head.collect(out);
  if (!spec.critic_shared) critic_backbone.collect(out);
  return out;
}

std::vector<double> build_state(const SwarmSnapshot& snap, int expected_particles) {
  const int n = static_cast<int>(snap.p_z.size());
  if (n != expected_particles || static_cast<int>(snap.p_u.size()) != n)
    throw std::invalid_argument("build_state: particle count mismatch");
  double cx = 0.0, cy = 0.0;
  for (int i = 0; i < n; i++) {
    cx += snap.p_z[i].x + snap.p_u[i].x;
    cy += snap.p_z[i].y + snap.p_u[i].y;
  }
  cx /= 2.0 * n;
  cy /= 2.0 * n;
  constexpr double kScale = 5.0;
  std::vector<double> s(4 * static_cast<size_t>(n));
  for (int i = 0; i < n; i++) {
    s[i] = (snap.p_z[i].x - cx) / kScale;
    s[n + i] = (snap.p_z[i].y - cy) / kScale;
    s[2 * n + i] = (snap.p_u[i].x - cx) / kScale;
    s[3 * n + i] = (snap.p_u[i].y - cy) / kScale;
  }
  return s;
}

namespace {

Eigen::MatrixXd to_row(const std::vector<double>& v) {
  Eigen::MatrixXd x(1, v.size());
  for (size_t i = 0; i < v.size(); i++) x(0, i) = v[i];
  return x;
}

struct ForwardOut {
  Eigen::MatrixXd m;  // B x 1 pre-squash policy means
  Eigen::MatrixXd v;  // B x 1 values
};

ForwardOut forward_batch(AgentParams& p, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd bb = p.backbone.forward(x);
  const Eigen::MatrixXd nk = p.neck.forward(bb);
  const Eigen::MatrixXd at = p.attn.forward(nk);
  ForwardOut out;
  out.m = p.policy_head.forward(at);
  out.v = p.critic_head.forward(p.spec.critic_shared ? bb : p.critic_backbone.forward(x));
  return out;
}

void backward_batch(AgentParams& p, const Eigen::MatrixXd& g_m, const Eigen::MatrixXd& g_v) {
  const Eigen::MatrixXd g_at = p.policy_head.backward(g_m);
  const Eigen::MatrixXd g_nk = p.attn.backward(g_at);
  const Eigen::MatrixXd g_bb_policy = p.neck.backward(g_nk);
  const Eigen::MatrixXd g_critic_in = p.critic_head.backward(g_v);
  if (p.spec.critic_shared) {
    p.backbone.backward(g_bb_policy + g_critic_in);
  } else {
    p.critic_backbone.backward(g_critic_in);
    p.backbone.backward(g_bb_policy);
  }
}

struct LossEval {
  PpoStats stats;
  Eigen::MatrixXd g_m, g_v;
  double g_log_std = 0.0;
};

LossEval eval_loss(AgentParams& p, const RolloutBuffer& buffer, const AdvantageResult& adv,
                   const PpoConfig& cfg, bool want_grads) {
  const int b = buffer.size();
  Eigen::MatrixXd x(b, p.spec.input_dim());
  for (int i = 0; i < b; i++) {
    const auto& s = buffer.transitions[i].state;
    if (static_cast<int>(s.size()) != p.spec.input_dim())
      throw std::invalid_argument("ppo: state width mismatch");
    for (int j = 0; j < p.spec.input_dim(); j++) x(i, j) = s[j];
  }
  const ForwardOut f = forward_batch(p, x);
  const double log_std = p.log_std.value(0, 0);
  const double sigma = std::exp(log_std);
  const double inv_var = 1.0 / (sigma * sigma);

  LossEval ev;
  ev.g_m = Eigen::MatrixXd::Zero(b, 1);
  ev.g_v = Eigen::MatrixXd::Zero(b, 1);

  double surr_sum = 0.0;
  double value_sum = 0.0;
  for (int i = 0; i < b; i++) {
    const auto& tr = buffer.transitions[i];
    const double m = f.m(i, 0);
    const double logp = -0.5 * (tr.z - m) * (tr.z - m) * inv_var - log_std - 0.5 * kLog2Pi -
                        std::log(tr.action * (1.0 - tr.action));
    const double ratio = std::exp(logp - tr.log_prob);
    const double a_hat = adv.standardized[i];
    const double unclipped = ratio * a_hat;
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * a_hat;
    surr_sum += std::min(unclipped, clipped);
    if (want_grads && unclipped <= clipped) {
      const double g_ratio = -a_hat / b;  // through the -mean(surr) term
      const double g_logp = g_ratio * ratio;
      ev.g_m(i, 0) += g_logp * (tr.z - m) * inv_var;
      ev.g_log_std += g_logp * ((tr.z - m) * (tr.z - m) * inv_var - 1.0);
    }
    if (cfg.critic_enabled) {
      const double err = f.v(i, 0) - adv.returns[i];
      value_sum += err * err;
      if (want_grads) ev.g_v(i, 0) = cfg.value_coeff * 2.0 * err / b;
    }
  }

  ev.stats.policy_loss = -surr_sum / b;
  ev.stats.value_loss = cfg.critic_enabled ? value_sum / b : 0.0;
  ev.stats.entropy = 0.5 * (kLog2Pi + 1.0) + log_std;
  ev.stats.total_loss = ev.stats.policy_loss + cfg.value_coeff * ev.stats.value_loss -
                        cfg.entropy_coeff * ev.stats.entropy;
  if (want_grads) ev.g_log_std -= cfg.entropy_coeff;
  return ev;
}

}  // namespace

PolicyOut policy_forward(AgentParams& params, const std::vector<double>& state) {
  if (static_cast<int>(state.size()) != params.spec.input_dim())
    throw std::invalid_argument("policy_forward: state width mismatch");
  const Eigen::MatrixXd x = to_row(state);
  const Eigen::MatrixXd at = params.attn.forward(params.neck.forward(params.backbone.forward(x)));
  const double m = params.policy_head.forward(at)(0, 0);
  if (!std::isfinite(m)) throw std::runtime_error("policy_forward: non-finite activation");
  PolicyOut out;
  out.mean_z = m;
  out.mu = 1.0 / (1.0 + std::exp(-m));
  out.sigma = std::exp(params.log_std.value(0, 0));
  return out;
}

double critic_forward(AgentParams& params, const std::vector<double>& state) {
  if (static_cast<int>(state.size()) != params.spec.input_dim())
    throw std::invalid_argument("critic_forward: state width mismatch");
  const Eigen::MatrixXd x = to_row(state);
  const Eigen::MatrixXd in =
      params.spec.critic_shared ? params.backbone.forward(x) : params.critic_backbone.forward(x);
  const double v = params.critic_head.forward(in)(0, 0);
  if (!std::isfinite(v)) throw std::runtime_error("critic_forward: non-finite value");
  return v;
}

double action_log_prob(double z, double a, double mean_z, double sigma) {
  const double d = (z - mean_z) / sigma;
  return -0.5 * d * d - std::log(sigma) - 0.5 * kLog2Pi - std::log(a * (1.0 - a));
}

ActionSample sample_action(const PolicyOut& dist, Rng& rng) {
  ActionSample s;
  s.z = dist.mean_z + dist.sigma * rng.gauss();
  s.a = 1.0 / (1.0 + std::exp(-s.z));
  constexpr double lo = 1e-6, hi = 1.0 - 1e-6;
  if (s.a < lo || s.a > hi) {
    s.a = std::clamp(s.a, lo, hi);
    s.z = std::log(s.a / (1.0 - s.a));
  }
  s.log_prob = action_log_prob(s.z, s.a, dist.mean_z, dist.sigma);
  return s;
}

double compute_reward(double sigma_x2, double sigma_y2, double score, double neff,
                      int n_particles, double a_t, double a_prev, const RewardWeights& beta) {
  if (sigma_x2 < 0.0 || sigma_y2 < 0.0 || score < -1e-9 || score > 1.0 + 1e-9 ||
      neff < 1.0 - 1e-9 || neff > n_particles + 1e-9 || a_t < 0.0 || a_t > 1.0 ||
      a_prev < 0.0 || a_prev > 1.0)
    throw std::invalid_argument("compute_reward: input out of range");
  const double da = a_t - a_prev;
  return beta.b1 * std::exp(-(sigma_x2 + sigma_y2) / 3.0) + beta.b2 * score +
         beta.b3 * (neff / n_particles) - beta.b4 * da * da;
}

AdvantageResult compute_advantages(const RolloutBuffer& buffer, double gamma, double lambda) {
  const int t_len = buffer.size();
  if (t_len == 0) throw std::invalid_argument("compute_advantages: empty buffer");
  AdvantageResult out;
  out.raw.resize(t_len);
  out.returns.resize(t_len);
  double gae = 0.0;
  for (int t = t_len - 1; t >= 0; t--) {
    const auto& tr = buffer.transitions[t];
    const double next_v = (tr.done || t + 1 >= t_len) ? 0.0 : buffer.transitions[t + 1].value;
    const double delta = tr.reward + gamma * next_v - tr.value;
    gae = delta + gamma * lambda * (tr.done ? 0.0 : gae);
    out.raw[t] = gae;
    out.returns[t] = gae + tr.value;
  }
  double mean = 0.0;
  for (double a : out.raw) mean += a;
  mean /= t_len;
  double var = 0.0;
  for (double a : out.raw) var += (a - mean) * (a - mean);
  var /= t_len;
  const double denom = std::sqrt(var) + 1e-8;
  out.standardized.resize(t_len);
  for (int t = 0; t < t_len; t++) out.standardized[t] = (out.raw[t] - mean) / denom;
  return out;
}

double ppo_loss(AgentParams& params, const RolloutBuffer& buffer, const AdvantageResult& adv,
                const PpoConfig& cfg) {
  return eval_loss(params, buffer, adv, cfg, false).stats.total_loss;
}

PpoStats ppo_backward(AgentParams& params, const RolloutBuffer& buffer,
                      const AdvantageResult& adv, const PpoConfig& cfg) {
  LossEval ev = eval_loss(params, buffer, adv, cfg, true);
  backward_batch(params, ev.g_m, ev.g_v);
  params.log_std.grad(0, 0) += ev.g_log_std;
  return ev.stats;
}

PpoStats ppo_update(AgentParams& params, const RolloutBuffer& buffer, const PpoConfig& cfg) {
  if (buffer.size() < 2) throw std::invalid_argument("ppo_update: need at least 2 transitions");
  const AdvantageResult adv =
      compute_advantages(buffer, cfg.gamma, cfg.critic_enabled ? cfg.lambda : 1.0);
  std::vector<nn::Param*> reg = params.registry();
  PpoStats last;
  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    nn::zero_grads(reg);
    const PpoStats st = ppo_backward(params, buffer, adv, cfg);
    if (!std::isfinite(st.total_loss)) {
      last = st;
      last.aborted = true;
      return last;
    }
    // Rescale pathological updates (rare ratio x advantage spikes) so one bad
    // epoch cannot run the policy mean off to saturation. Generous bound; the
    // direction is preserved and typical steps are far below it.
    constexpr double kMaxGradNorm = 10.0;
    double sq = 0.0;
    for (nn::Param* p : reg)
      if (!p->frozen) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > kMaxGradNorm)
      for (nn::Param* p : reg)
        if (!p->frozen) p->grad *= kMaxGradNorm / norm;
    nn::adam_step(reg, cfg.lr, ++params.adam_t);
    last = st;
  }
  return last;
}

void freeze(AgentParams& params, FreezeScope scope) {
  for (nn::Param* p : params.registry()) p->frozen = false;
  if (scope == FreezeScope::none) return;
  std::vector<nn::Param*> frozen;
  params.backbone.collect(frozen);
  if (!params.spec.critic_shared) params.critic_backbone.collect(frozen);
  if (scope == FreezeScope::backbone_neck) {
    params.neck.collect(frozen);
    params.attn.collect(frozen);
  }
  for (nn::Param* p : frozen) p->frozen = true;
}

void save_checkpoint(AgentParams& params, const std::string& path, int episode,
                     double mean_reward) {
  json j;
  j["format_version"] = 1;
  json spec;
  spec["backbone"] = params.spec.backbone;
  spec["neck"] = params.spec.neck;
  spec["attn_heads"] = params.spec.attn_heads;
  spec["attn_head_dim"] = params.spec.attn_head_dim;
  spec["attn_out"] = params.spec.attn_out;
  spec["policy"] = params.spec.policy;
  spec["critic"] = params.spec.critic;
  spec["critic_shared"] = params.spec.critic_shared;
  j["layer_spec"] = std::move(spec);

  json tensors;
  json mask;
  for (nn::Param* p : params.registry()) {
    json rows = json::array();
    for (int r = 0; r < p->value.rows(); r++) {
      json row = json::array();
      for (int c = 0; c < p->value.cols(); c++) row.push_back(p->value(r, c));
      rows.push_back(std::move(row));
    }
    tensors[p->name] = std::move(rows);
    mask[p->name] = p->frozen;
  }
  j["tensors"] = std::move(tensors);
  j["freeze_mask"] = std::move(mask);
  j["training_meta"] = {{"episode", episode}, {"mean_reward", mean_reward}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(1) << "\n";
}

AgentParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: parse error in " + path + ": " + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported format version");

  const json& spec_j = j.at("layer_spec");
  NetworkSpec spec;
  spec.backbone = spec_j.at("backbone").get<std::vector<int>>();
  spec.neck = spec_j.at("neck").get<std::vector<int>>();
  spec.attn_heads = spec_j.at("attn_heads").get<int>();
  spec.attn_head_dim = spec_j.at("attn_head_dim").get<int>();
  spec.attn_out = spec_j.at("attn_out").get<int>();
  spec.policy = spec_j.at("policy").get<std::vector<int>>();
  spec.critic = spec_j.at("critic").get<std::vector<int>>();
  spec.critic_shared = spec_j.at("critic_shared").get<bool>();

  AgentParams params = AgentParams::make(spec, 0);
  const json& tensors = j.at("tensors");
  const json& mask = j.at("freeze_mask");
  for (nn::Param* p : params.registry()) {
    if (!tensors.contains(p->name))
      throw std::runtime_error("load_checkpoint: missing tensor " + p->name);
    const json& rows = tensors.at(p->name);
    if (static_cast<int>(rows.size()) != p->value.rows())
      throw std::runtime_error("load_checkpoint: shape mismatch at " + p->name);
    for (int r = 0; r < p->value.rows(); r++) {
      const json& row = rows.at(r);
      if (static_cast<int>(row.size()) != p->value.cols())
        throw std::runtime_error("load_checkpoint: shape mismatch at " + p->name);
      for (int c = 0; c < p->value.cols(); c++) p->value(r, c) = row.at(c).get<double>();
    }
    if (mask.contains(p->name)) p->frozen = mask.at(p->name).get<bool>();
  }
  return params;
}

}  // namespace dslam
