#include <stdexcept>
#include <cmath>

#include "doctest.h"
#include "hcsp/rl.hpp"

using namespace hcsp;
using namespace hcsp::rl;
using net::HeadKind;

namespace {

// Direct nested-sum GAE used as an oracle against the recursive production
// implementation: A_t = sum_l (gamma*lambda)^l * delta_{t+l}, truncated at
// episode boundaries.
GaeResult brute_force_gae(const std::vector<double>& rewards,
                          const std::vector<double>& values,
                          const std::vector<bool>& dones, double bootstrap,
                          double gamma, double lambda) {
  size_t n = rewards.size();
  std::vector<double> delta(n);
  for (size_t t = 0; t < n; ++t) {
    double next_v = dones[t] ? 0.0 : (t + 1 < n ? values[t + 1] : bootstrap);
    delta[t] = rewards[t] + gamma * next_v - values[t];
  }
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  for (size_t t = 0; t < n; ++t) {
    double adv = 0.0, w = 1.0;
    for (size_t l = t; l < n; ++l) {
      adv += w * delta[l];
      if (dones[l]) break;
      w *= gamma * lambda;
    }
    out.advantages[t] = adv;
    out.returns[t] = adv + values[t];
  }
  return out;
}

Trajectory random_trajectory(Rng& rng, size_t max_len) {
  Trajectory traj;
  size_t n = 1 + rng.below(max_len);
  for (size_t i = 0; i < n; ++i) {
    Transition t;
    t.reward = rng.normal();
    t.value = rng.normal();
    t.done = rng.uniform() < 0.1;
    t.event_step = rng.uniform() < 0.3;
    traj.transitions.push_back(t);
  }
  traj.bootstrap_value = rng.normal();
  return traj;
}

}  // namespace

TEST_CASE("gae matches the brute-force nested sum") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 1 + rng.below(32);
    std::vector<double> rewards(n), values(n);
    std::vector<bool> dones(n);
    for (size_t i = 0; i < n; ++i) {
      rewards[i] = rng.normal();
      values[i] = rng.normal();
      dones[i] = rng.uniform() < 0.15;
    }
    double bootstrap = rng.normal();
    double gamma = rng.uniform(0.9, 1.0);
    double lambda = rng.uniform(0.8, 1.0);
    GaeResult got = compute_gae(rewards, values, dones, bootstrap, gamma, lambda);
    GaeResult want =
        brute_force_gae(rewards, values, dones, bootstrap, gamma, lambda);
    for (size_t i = 0; i < n; ++i) {
      CHECK(std::abs(got.advantages[i] - want.advantages[i]) < 1e-12);
      CHECK(std::abs(got.returns[i] - want.returns[i]) < 1e-12);
    }
  }
}

TEST_CASE("macro gae with unit gaps equals plain gae") {
  Rng rng(11);
  std::vector<double> rewards(20), values(20);
  std::vector<bool> dones(20, false);
  std::vector<int> gaps(20, 1);
  for (size_t i = 0; i < 20; ++i) {
    rewards[i] = rng.normal();
    values[i] = rng.normal();
  }
  GaeResult a = compute_gae(rewards, values, dones, 0.3, 0.99, 0.95);
  GaeResult b = compute_gae_macro(rewards, values, dones, gaps, 0.3, 0.99, 0.95);
  for (size_t i = 0; i < 20; ++i)
    CHECK(a.advantages[i] == doctest::Approx(b.advantages[i]).epsilon(1e-14));
}

TEST_CASE("macro gae discounts by gamma to the gap") {
  // Two macro steps, no lambda mixing (lambda = 0 reduces GAE to one-step TD):
  // delta_0 = r_0 + gamma^g0 * v_1 - v_0.
  std::vector<double> rewards{2.0, 1.0};
  std::vector<double> values{0.5, -0.25};
  std::vector<bool> dones{false, false};
  std::vector<int> gaps{3, 2};
  double gamma = 0.9, bootstrap = 0.7;
  GaeResult g = compute_gae_macro(rewards, values, dones, gaps, bootstrap,
                                  gamma, 0.0);
  double d1 = rewards[1] + std::pow(gamma, 2) * bootstrap - values[1];
  double d0 = rewards[0] + std::pow(gamma, 3) * values[1] - values[0];
  CHECK(g.advantages[1] == doctest::Approx(d1).epsilon(1e-14));
  CHECK(g.advantages[0] == doctest::Approx(d0).epsilon(1e-14));
}

TEST_CASE("reallocation keeps one transition per event plus the start") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    Trajectory traj = random_trajectory(rng, 40);
    double gamma = rng.uniform(0.9, 1.0);
    auto macro = sample_reallocation(traj, gamma);

    size_t events = 0;
    for (size_t i = 1; i < traj.transitions.size(); ++i)
      if (traj.transitions[i].event_step) events++;
    CHECK(macro.size() == events + 1);

    // gaps partition the episode
    int total_gap = 0;
    for (const auto& t : macro) total_gap += t.gap;
    CHECK(total_gap == static_cast<int>(traj.transitions.size()));

    // final done flag propagates to the last macro transition only
    for (size_t k = 0; k + 1 < macro.size(); ++k) CHECK(!macro[k].done);
    CHECK(macro.back().done == traj.transitions.back().done);
  }
}

TEST_CASE("reallocation with gamma 1 preserves the episode return") {
  Rng rng(505);
  for (int trial = 0; trial < 1000; ++trial) {
    Trajectory traj = random_trajectory(rng, 40);
    auto macro = sample_reallocation(traj, 1.0);
    double original = 0.0;
    for (const auto& t : traj.transitions) original += t.reward;
    double reallocated = 0.0;
    for (const auto& t : macro) reallocated += t.reward;
    CHECK(reallocated == doctest::Approx(original).epsilon(1e-12));
  }
}

TEST_CASE("reallocation discounts within each macro segment") {
  Trajectory traj;
  double rewards[] = {1.0, 2.0, 4.0, 8.0};
  bool events[] = {false, false, true, false};
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.reward = rewards[i];
    t.event_step = events[i];
    traj.transitions.push_back(t);
  }
  auto macro = sample_reallocation(traj, 0.5);
  REQUIRE(macro.size() == 2);
  CHECK(macro[0].reward == doctest::Approx(1.0 + 0.5 * 2.0).epsilon(1e-14));
  CHECK(macro[0].gap == 2);
  CHECK(macro[1].reward == doctest::Approx(4.0 + 0.5 * 8.0).epsilon(1e-14));
  CHECK(macro[1].gap == 2);
}

TEST_CASE("gaussian kl closed form agrees with monte carlo") {
  ActionDistribution p, q;
  p.kind = q.kind = HeadKind::Gaussian;
  p.mean = {0.3, -0.7};
  p.log_std = {std::log(0.5), std::log(1.2)};
  q.mean = {0.0, 0.1};
  q.log_std = {std::log(0.8), std::log(0.9)};

  double closed = kl_divergence_gaussian(p, q);

  Rng rng(314159);
  double mc = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    net::Action a;
    for (size_t d = 0; d < p.mean.size(); ++d)
      a.continuous.push_back(p.mean[d] + std::exp(p.log_std[d]) * rng.normal());
    mc += net::log_prob(p, a) - net::log_prob(q, a);
  }
  mc /= n;
  CHECK(closed == doctest::Approx(mc).epsilon(0.02));
}

TEST_CASE("kl of a distribution with itself is zero") {
  ActionDistribution p;
  p.kind = HeadKind::Gaussian;
  p.mean = {1.0, -2.0, 0.0};
  p.log_std = {0.1, -0.3, 0.0};
  CHECK(kl_divergence_gaussian(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(kl_shaped_reward(3.5, p, p, 1e-4) == doctest::Approx(3.5));
}

TEST_CASE("kl shaping subtracts the scaled divergence") {
  ActionDistribution p, q;
  p.kind = q.kind = HeadKind::Gaussian;
  p.mean = {1.0};
  p.log_std = {0.0};
  q.mean = {0.0};
  q.log_std = {0.0};
  // KL(N(1,1) || N(0,1)) = 0.5
  CHECK(kl_shaped_reward(2.0, p, q, 0.1) == doctest::Approx(2.0 - 0.05));
  CHECK(kl_shaped_reward(2.0, p, q, 0.0) == 2.0);
}

TEST_CASE("high level reward is zero-sum in the outcome term") {
  HighLevelRewardConfig cfg;  // c1 = 10, c2 = 1
  auto r = high_level_reward(1, {false, false}, cfg);
  CHECK(r[0] == 10.0);
  CHECK(r[1] == -10.0);

  r = high_level_reward(0, {true, false}, cfg);
  CHECK(r[0] == 1.0);
  CHECK(r[1] == 0.0);

  r = high_level_reward(-1, {true, true}, cfg);
  CHECK(r[0] == -9.0);
  CHECK(r[1] == 11.0);
}

TEST_CASE("gradient clipping rescales to the cap and reports the raw norm") {
  std::vector<double> g{3.0, 4.0};  // norm 5
  double norm = clip_grad_norm(g, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));

  std::vector<double> small{0.1, 0.2};
  double n2 = clip_grad_norm(small, 10.0);
  CHECK(n2 == doctest::Approx(std::sqrt(0.05)));
  CHECK(small[0] == 0.1);  // untouched below the cap
}

TEST_CASE("adam first step moves each coordinate by roughly lr") {
  // With bias correction, step 1 gives params -= lr * g / (|g| + eps).
  AdamOptimizer adam(3);
  std::vector<double> params{1.0, 2.0, 3.0};
  std::vector<double> grad{0.5, -2.0, 0.0};
  std::vector<double> lr(3, 0.01);
  adam.step(params, grad, lr);
  CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-6));
  CHECK(params[2] == doctest::Approx(3.0));
}

TEST_CASE("ppo loss gradient matches central finite differences") {
  net::MlpSpec spec;
  spec.input_dim = 6;
  spec.hidden = {8};
  spec.head_kind = net::HeadKind::Gaussian;
  spec.gaussian_dim = 3;
  Rng rng(888);
  net::PolicyParams params = net::PolicyParams::init(spec, rng);

  std::vector<net::Sample> batch;
  for (int i = 0; i < 5; ++i) {
    net::Sample s;
    s.obs.resize(6);
    for (double& v : s.obs) v = rng.normal();
    net::ForwardResult f = net::forward(params, s.obs);
    s.action = net::sample(f.dist, rng);
    s.old_log_prob = net::log_prob(f.dist, s.action) + 0.05 * rng.normal();
    s.advantage = rng.normal();
    s.value_target = rng.normal();
    batch.push_back(s);
  }

  net::LossSpec loss_spec;
  std::vector<double> grad(params.layout.total, 0.0);
  net::loss_gradients(params, batch, loss_spec, grad);

  auto scalar_loss = [&](const net::PolicyParams& p) {
    std::vector<double> g(p.layout.total, 0.0);
    net::LossStats st = net::loss_gradients(p, batch, loss_spec, g);
    return st.policy_loss + st.value_loss - loss_spec.entropy_coef * st.entropy;
  };

  const double h = 1e-6;
  Rng pick(99);
  for (int k = 0; k < 40; ++k) {
    size_t idx = pick.below(params.layout.total);
    net::PolicyParams plus = params, minus = params;
    plus.flat[idx] += h;
    minus.flat[idx] -= h;
    double fd = (scalar_loss(plus) - scalar_loss(minus)) / (2.0 * h);
    double scale = std::max({1.0, std::abs(fd), std::abs(grad[idx])});
    CHECK(std::abs(grad[idx] - fd) / scale < 1e-4);
  }
}

TEST_CASE("ppo update improves action probability under positive advantage") {
  net::MlpSpec spec;
  spec.input_dim = 4;
  spec.hidden = {8};
  spec.head_kind = net::HeadKind::Gaussian;
  spec.gaussian_dim = 2;
  Rng rng(777);
  net::PolicyParams params = net::PolicyParams::init(spec, rng);

  PpoConfig cfg;
  cfg.minibatches = 2;
  cfg.epochs = 2;
  cfg.actor_lr = 1e-3;
  cfg.critic_lr = 1e-3;
  PpoLearner learner(params, cfg);

  std::vector<double> obs{0.5, -0.2, 0.1, 0.9};
  net::Action target;
  target.continuous = {0.4, -0.1};

  Trajectory traj;
  for (int i = 0; i < 16; ++i) {
    net::ForwardResult f = net::forward(learner.params(), obs);
    Transition t;
    t.obs = obs;
    t.action = target;
    t.log_prob = net::log_prob(f.dist, target);
    t.reward = 1.0;
    t.value = f.value;
    t.done = i == 15;
    traj.transitions.push_back(t);
  }

  double before = net::log_prob(net::forward(learner.params(), obs).dist, target);
  Rng update_rng(5);
  UpdateStats stats = learner.update({traj}, update_rng);
  CHECK(!stats.aborted);
  double after = net::log_prob(net::forward(learner.params(), obs).dist, target);
  CHECK(after > before);
}

TEST_CASE("ppo update rejects buffers smaller than the minibatch count") {
  net::MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {4};
  spec.head_kind = net::HeadKind::Gaussian;
  spec.gaussian_dim = 1;
  Rng rng(1);
  PpoConfig cfg;
  cfg.minibatches = 16;
  PpoLearner learner(net::PolicyParams::init(spec, rng), cfg);
  Trajectory traj;
  Transition t;
  t.obs = {0.0, 0.0};
  t.action.continuous = {0.0};
  traj.transitions.push_back(t);
  Rng r2(2);
  CHECK_THROWS_AS(learner.update({traj}, r2), std::invalid_argument);
}
