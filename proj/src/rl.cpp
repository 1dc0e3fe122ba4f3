#include "hcsp/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hcsp::rl {

GaeResult compute_gae(const std::vector<double>& rewards,
                      const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap,
                      double gamma, double lambda) {
  size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw std::invalid_argument("GAE input length mismatch");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (size_t i = n; i-- > 0;) {
    double next_value = (i + 1 < n) ? values[i + 1] : bootstrap;
    double not_done = dones[i] ? 0.0 : 1.0;
    double delta = rewards[i] + gamma * next_value * not_done - values[i];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
  }
  return r;
}

GaeResult compute_gae_macro(const std::vector<double>& rewards,
                            const std::vector<double>& values,
                            const std::vector<bool>& dones,
                            const std::vector<int>& gaps, double bootstrap,
                            double gamma, double lambda) {
  size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || gaps.size() != n)
    throw std::invalid_argument("GAE input length mismatch");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (size_t i = n; i-- > 0;) {
    double g_eff = std::pow(gamma, gaps[i]);
    double next_value = (i + 1 < n) ? values[i + 1] : bootstrap;
    double not_done = dones[i] ? 0.0 : 1.0;
    double delta = rewards[i] + g_eff * next_value * not_done - values[i];
    next_adv = delta + g_eff * lambda * not_done * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
  }
  return r;
}

std::vector<Transition> sample_reallocation(const Trajectory& trajectory,
                                            double gamma) {
  const auto& ts = trajectory.transitions;
  std::vector<Transition> out;
  if (ts.empty()) return out;

  std::vector<size_t> anchors;
  anchors.push_back(0);
  for (size_t i = 1; i < ts.size(); ++i)
    if (ts[i].event_step) anchors.push_back(i);

  for (size_t k = 0; k < anchors.size(); ++k) {
    size_t start = anchors[k];
    size_t end = (k + 1 < anchors.size()) ? anchors[k + 1] : ts.size();
    Transition t = ts[start];
    double acc = 0.0;
    double disc = 1.0;
    for (size_t i = start; i < end; ++i) {
      acc += disc * ts[i].reward;
      disc *= gamma;
    }
    t.reward = acc;
    t.gap = static_cast<int>(end - start);
    t.done = (end == ts.size()) && ts.back().done;
    out.push_back(std::move(t));
  }
  return out;
}

double kl_divergence_gaussian(const ActionDistribution& current,
                              const ActionDistribution& reference) {
  if (current.kind != net::HeadKind::Gaussian ||
      reference.kind != net::HeadKind::Gaussian)
    throw std::invalid_argument("closed-form KL requires Gaussian heads");
  if (current.mean.size() != reference.mean.size())
    throw std::invalid_argument("KL dimension mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < current.mean.size(); ++i) {
    double s1 = std::exp(current.log_std[i]);
    double s2 = std::exp(reference.log_std[i]);
    double d = current.mean[i] - reference.mean[i];
    kl += reference.log_std[i] - current.log_std[i] +
          (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
  }
  return kl;
}

double kl_shaped_reward(double base, const ActionDistribution& current,
                        const ActionDistribution& reference, double c3) {
  if (c3 == 0.0) return base;
  return base - c3 * kl_divergence_gaussian(current, reference);
}

std::array<double, 2> high_level_reward(int outcome_delta,
                                        const std::array<bool, 2>& hit_flags,
                                        const HighLevelRewardConfig& config) {
  std::array<double, 2> r{0.0, 0.0};
  r[0] = config.c1 * outcome_delta + config.c2 * (hit_flags[0] ? 1.0 : 0.0);
  r[1] = config.c1 * -outcome_delta + config.c2 * (hit_flags[1] ? 1.0 : 0.0);
  return r;
}

AdamOptimizer::AdamOptimizer(int dim, double beta1, double beta2,
                             double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(dim, 0.0),
      v_(dim, 0.0) {}

void AdamOptimizer::step(std::vector<double>& params,
                         const std::vector<double>& grad,
                         const std::vector<double>& lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    double mhat = m_[i] / bc1;
    double vhat = v_[i] / bc2;
    params[i] -= lr[i] * mhat / (std::sqrt(vhat) + epsilon_);
  }
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

PpoLearner::PpoLearner(PolicyParams params, const PpoConfig& config)
    : params_(std::move(params)), config_(config),
      adam_(params_.layout.total) {
  // Actor lr on everything except the value head; critic lr on the value head.
  lr_.assign(params_.layout.total, config_.actor_lr);
  const auto& l = params_.layout;
  for (int i = 0; i < l.value_w.size(); ++i)
    lr_[l.value_w.offset + i] = config_.critic_lr;
  lr_[l.value_b.offset] = config_.critic_lr;
}

UpdateStats PpoLearner::update(const std::vector<Trajectory>& trajectories,
                               Rng& rng) {
  UpdateStats stats;
  std::vector<net::Sample> buffer;
  std::vector<double> all_returns;

  for (const Trajectory& traj : trajectories) {
    size_t n = traj.transitions.size();
    if (n == 0) continue;
    std::vector<double> rewards(n), values(n);
    std::vector<bool> dones(n);
    std::vector<int> gaps(n);
    for (size_t i = 0; i < n; ++i) {
      const Transition& t = traj.transitions[i];
      rewards[i] = t.reward;
      values[i] = t.value;
      dones[i] = t.done;
      gaps[i] = t.gap;
    }
    // Values collected during rollout live in normalized space when value
    // norm is enabled; denormalize for GAE on raw rewards.
    double bootstrap = traj.bootstrap_value;
    if (config_.use_value_norm && value_norm_.warmed_up()) {
      for (double& v : values) v = value_norm_.denormalize(v);
      bootstrap = value_norm_.denormalize(bootstrap);
    }
    GaeResult gae = compute_gae_macro(rewards, values, dones, gaps, bootstrap,
                                      config_.gamma, config_.gae_lambda);
    for (size_t i = 0; i < n; ++i) {
      const Transition& t = traj.transitions[i];
      net::Sample s;
      s.obs = t.obs;
      s.action = t.action;
      s.old_log_prob = t.log_prob;
      s.advantage = gae.advantages[i];
      s.value_target = gae.returns[i];
      all_returns.push_back(gae.returns[i]);
      buffer.push_back(std::move(s));
    }
  }
  if (static_cast<int>(buffer.size()) < config_.minibatches)
    throw std::invalid_argument("buffer smaller than minibatch count");

  if (config_.use_value_norm) {
    value_norm_.update(all_returns);
    for (net::Sample& s : buffer)
      s.value_target = value_norm_.normalize(s.value_target);
  }
  if (config_.normalize_advantages) {
    double m = 0.0;
    for (const auto& s : buffer) m += s.advantage;
    m /= static_cast<double>(buffer.size());
    double var = 0.0;
    for (const auto& s : buffer) var += (s.advantage - m) * (s.advantage - m);
    var /= static_cast<double>(buffer.size());
    double sd = std::sqrt(var) + 1e-8;
    for (auto& s : buffer) s.advantage = (s.advantage - m) / sd;
  }

  net::LossSpec loss_spec{config_.clip, config_.entropy_coef,
                          config_.value_loss_coef};
  std::vector<double> snapshot = params_.flat;

  std::vector<size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  int updates = 0;

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    // Fisher-Yates with the shared deterministic rng.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    size_t per_mb = buffer.size() / config_.minibatches;
    for (int mb = 0; mb < config_.minibatches; ++mb) {
      size_t begin = mb * per_mb;
      size_t end = (mb + 1 == config_.minibatches) ? buffer.size()
                                                   : begin + per_mb;
      std::vector<net::Sample> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) batch.push_back(buffer[order[i]]);
      net::LossStats ls = net::loss_gradients(params_, batch, loss_spec, grad);
      if (!ls.finite) {
        params_.flat = snapshot;  // abort, parameters unchanged
        stats.aborted = true;
        return stats;
      }
      stats.grad_norm += clip_grad_norm(grad, config_.max_grad_norm);
      adam_.step(params_.flat, grad, lr_);
      stats.policy_loss += ls.policy_loss;
      stats.value_loss += ls.value_loss;
      stats.entropy += ls.entropy;
      stats.approx_kl += ls.approx_kl;
      stats.clip_fraction += ls.clip_fraction;
      ++updates;
    }
  }
  if (updates > 0) {
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.approx_kl /= updates;
    stats.clip_fraction /= updates;
    stats.grad_norm /= updates;
  }
  return stats;
}

}  // namespace hcsp::rl
