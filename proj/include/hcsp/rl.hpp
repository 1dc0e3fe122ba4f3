#ifndef HCSP_RL_HPP_
#define HCSP_RL_HPP_

#include <optional>
#include <vector>

#include "hcsp/mlp.hpp"

namespace hcsp::rl {

using net::Action;
using net::ActionDistribution;
using net::PolicyParams;

struct PpoConfig {
  double clip = 0.1;
  int epochs = 4;
  int minibatches = 16;
  double entropy_coef = 0.001;
  double max_grad_norm = 10.0;
  double gae_lambda = 0.95;
  double gamma = 0.995;
  double actor_lr = 5e-4;
  double critic_lr = 5e-4;
  int buffer_length = 64;
  bool normalize_advantages = true;
  double value_loss_coef = 1.0;
  bool use_value_norm = true;
};

struct HighLevelRewardConfig {
  double c1 = 10.0;  // win/lose weight
  double c2 = 1.0;   // racket-hit weight
};

struct KlRewardConfig {
  double c3 = 1e-4;
};

struct Transition {
  std::vector<double> obs;
  Action action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
  bool event_step = false;  // a high-level trigger fired at this step
  int gap = 1;              // steps to the next transition (macro-step width)
};

struct Trajectory {
  std::vector<Transition> transitions;
  double bootstrap_value = 0.0;  // value of the state after the last step
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

GaeResult compute_gae(const std::vector<double>& rewards,
                      const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap,
                      double gamma, double lambda);

// GAE over macro-steps: discounting per element uses gamma^gap.
GaeResult compute_gae_macro(const std::vector<double>& rewards,
                            const std::vector<double>& values,
                            const std::vector<bool>& dones,
                            const std::vector<int>& gaps, double bootstrap,
                            double gamma, double lambda);

// Rebuilds an episode as event-triggered macro transitions: the initial step
// plus every event step, each carrying the discounted reward accumulated
// until the next event (the last one absorbs through episode end).
std::vector<Transition> sample_reallocation(const Trajectory& trajectory,
                                            double gamma);

double kl_divergence_gaussian(const ActionDistribution& current,
                              const ActionDistribution& reference);

double kl_shaped_reward(double base, const ActionDistribution& current,
                        const ActionDistribution& reference, double c3);

// Per-team high-level reward. outcome_delta: +1 team1 won, -1 team2 won,
// 0 otherwise; racket_hit_flags: per-team contact at this step.
std::array<double, 2> high_level_reward(int outcome_delta,
                                        const std::array<bool, 2>& hit_flags,
                                        const HighLevelRewardConfig& config);

class AdamOptimizer {
 public:
  AdamOptimizer(int dim, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  // lr may vary per coordinate (actor vs critic segments).
  void step(std::vector<double>& params, const std::vector<double>& grad,
            const std::vector<double>& lr);

 private:
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  bool aborted = false;  // non-finite loss; parameters unchanged
};

class PpoLearner {
 public:
  PpoLearner(PolicyParams params, const PpoConfig& config);

  // Consumes completed trajectories, computes GAE and (normalized) value
  // targets, then runs the clipped PPO epochs. Per-trajectory gaps drive
  // macro-step discounting for reallocated buffers.
  UpdateStats update(const std::vector<Trajectory>& trajectories, Rng& rng);

  const PolicyParams& params() const { return params_; }
  PolicyParams& params() { return params_; }
  const net::ValueNormState& value_norm() const { return value_norm_; }

 private:
  PolicyParams params_;
  PpoConfig config_;
  AdamOptimizer adam_;
  net::ValueNormState value_norm_;
  std::vector<double> lr_;
};

// Clips the gradient to a maximum global L2 norm; returns the pre-clip norm.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

}  // namespace hcsp::rl

#endif  // HCSP_RL_HPP_
