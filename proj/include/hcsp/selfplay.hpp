#ifndef HCSP_SELFPLAY_HPP_
#define HCSP_SELFPLAY_HPP_

#include <string>
#include <vector>

#include "hcsp/strategy.hpp"

namespace hcsp::selfplay {

using strategy::HierarchicalTeamPolicy;
using strategy::SkillPool;

// ---------------------------------------------------------------------------
// Population & bookkeeping

struct PopulationMember {
  HierarchicalTeamPolicy policy;
  std::string name;
  std::string parent;
  int stage = 2;
  std::uint64_t seed = 0;
  // Insertion evidence: the measured gate win rate, and whether insertion
  // happened because the step cap was reached rather than the gate passing.
  double insertion_win_rate = 0.0;
  bool inserted_at_cap = false;
  int training_updates = 0;
};

class Population {
 public:
  explicit Population(std::size_t max_size = 5) : max_size_(max_size) {}

  // Append-only; throws when the population is full.
  void add(PopulationMember member);
  const PopulationMember& operator[](std::size_t i) const {
    return members_.at(i);
  }
  std::size_t size() const { return members_.size(); }
  std::size_t max_size() const { return max_size_; }
  bool full() const { return members_.size() >= max_size_; }
  std::string manifest_json() const;

 private:
  std::size_t max_size_;
  std::vector<PopulationMember> members_;
};

struct WinRateMatrix {
  int n = 0;
  std::vector<double> win;    // row-major, row beats column
  std::vector<double> draw;
  std::vector<int> episodes;  // per cell
  std::vector<std::uint64_t> seeds;  // evaluation seed per cell

  double& win_at(int i, int j) { return win[i * n + j]; }
  double win_at(int i, int j) const { return win[i * n + j]; }
  double& draw_at(int i, int j) { return draw[i * n + j]; }
  double draw_at(int i, int j) const { return draw[i * n + j]; }

  // Grows to m x m, preserving existing cells (new cells zeroed).
  void grow(int m);
  std::string to_csv() const;        // win rates, heatmap-ready
  std::string sidecar_json() const;  // episode counts + seeds
};

enum class MetaSolver { Nash, Uniform, LatestOnly, HistoricalAverage };
MetaSolver meta_solver_from_name(const std::string& name);
std::string meta_solver_name(MetaSolver solver);

// ---------------------------------------------------------------------------
// Match evaluation

struct PairResult {
  double win = 0.0;  // first policy's outright wins / episodes
  double draw = 0.0;
  double loss = 0.0;
  int episodes = 0;

  // Draws count half, so a policy against itself scores exactly 0.5.
  double score() const { return win + 0.5 * draw; }
};

// Plays episodes in side-swapped pairs sharing a seed so a policy against
// itself scores exactly 0.5.
PairResult evaluate_pair(const HierarchicalTeamPolicy& a,
                         const HierarchicalTeamPolicy& b,
                         const game::EnvOptions& env, int episodes,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------
// Zero-sum meta-game solving

// Zero-sum payoff from a win rate: payoff = 2 * win_rate - 1.
std::vector<std::vector<double>> payoffs_from_win_rates(
    const std::vector<std::vector<double>>& win_rates);

struct NashResult {
  std::vector<double> row_strategy;
  std::vector<double> col_strategy;
  double value = 0.0;
  double exploitability = 0.0;  // duality gap certificate
  int iterations = 0;
};

// Best pure-response duality gap for mixed strategies on payoff matrix a.
double duality_gap(const std::vector<std::vector<double>>& payoffs,
                   const std::vector<double>& row,
                   const std::vector<double>& col);

// Regret-matching+ with linear averaging; iterates until the certificate
// meets the tolerance. Input is a win-rate matrix in [0,1].
NashResult solve_zero_sum(const std::vector<std::vector<double>>& win_rates,
                          double tolerance = 1e-6,
                          long max_iterations = 2000000);

// Opponent-sampling distribution over the current population.
std::vector<double> meta_distribution(MetaSolver solver,
                                      const WinRateMatrix& matrix, int n);

// ---------------------------------------------------------------------------
// Stage II: PSRO

struct Stage2Config {
  double win_rate_threshold = 0.9;
  int min_updates = 2;
  int max_updates = 12;  // candidate-training step cap (PPO updates)
  std::size_t max_population = 5;
  int eval_episodes = 100;  // per matrix cell
  int gate_episodes = 24;   // win-rate measurement against the mixture
  int episodes_per_update = 8;
  std::vector<int> hidden{64, 64};
  rl::PpoConfig ppo;  // Stage II defaults: lr 1e-4
  rl::HighLevelRewardConfig reward;
  bool sample_reallocation = true;
  std::uint64_t seed = 0;

  Stage2Config() {
    ppo.actor_lr = 1e-4;
    ppo.critic_lr = 1e-4;
    ppo.minibatches = 4;  // macro-step batches are small at desk scale
  }
};

struct Stage2State {
  Population population;
  WinRateMatrix matrix;
  std::vector<double> mixture;  // last meta-distribution over the population

  explicit Stage2State(std::size_t max_population = 5)
      : population(max_population) {}
};

// One PSRO step: train a candidate against the solver's mixture, insert it
// (gate or step cap), extend the matrix, recompute the mixture.
void psro_iteration(Stage2State& state, MetaSolver solver,
                    const SkillPool& skill_pool, const game::EnvOptions& env,
                    const Stage2Config& config);

// ---------------------------------------------------------------------------
// Stage III: co-self-play

struct Stage3Config {
  int max_iterations = 40;       // M (full scale: 4000)
  int checkpoint_interval = 10;  // N (full scale: 1000)
  double accept_threshold = 0.7;
  std::vector<skills::SkillId> refinement_order{
      skills::SkillId::Pass, skills::SkillId::Set, skills::SkillId::Attack};
  rl::KlRewardConfig kl;
  rl::PpoConfig low_ppo, high_ppo;
  rl::HighLevelRewardConfig reward;
  int episodes_per_iteration = 4;
  int eval_episodes = 20;  // per checkpoint
  bool joint_all_skills = false;  // ablation: refine everything at once
  std::uint64_t seed = 0;

  Stage3Config() {
    high_ppo.actor_lr = 1e-4;
    high_ppo.critic_lr = 1e-4;
    low_ppo.minibatches = 4;
    high_ppo.minibatches = 4;
  }
};

struct CheckpointReport {
  int iteration = 0;
  double win_rate = 0.0;
};

struct SkillRefinementReport {
  skills::SkillId skill{};
  std::vector<CheckpointReport> checkpoints;
  int selected = -1;     // argmax checkpoint index
  bool accepted = false;
  double selected_win_rate = 0.0;
};

struct Stage3Result {
  SkillPool pool;              // augmented (append-only variants)
  strategy::DecodeOptions decode;  // catalog extended per accepted skill
  net::PolicyParams high;      // jointly refined strategy
  std::vector<SkillRefinementReport> reports;
  std::string manifest_json() const;
};

Stage3Result co_optimize(const SkillPool& pool,
                         const net::PolicyParams& high_strategy,
                         const strategy::DecodeOptions& decode,
                         const HierarchicalTeamPolicy& frozen_opponent,
                         const game::EnvOptions& env,
                         const Stage3Config& config);

// Trains a fresh high-level strategy over the augmented catalog against the
// frozen opponent. MeanOfExisting reuses the old strategy via head surgery.
net::PolicyParams relearn_high_level(const SkillPool& pool,
                                     const strategy::DecodeOptions& decode,
                                     const net::PolicyParams* old_high,
                                     const HierarchicalTeamPolicy& opponent,
                                     const game::EnvOptions& env,
                                     const Stage2Config& config,
                                     net::HeadInitMode mode);

// ---------------------------------------------------------------------------
// Nash averaging (evaluation)

struct NashAveragingResult {
  std::vector<double> weights;
  std::vector<double> win_rate_vs_mixture;  // sampled per the weights
  WinRateMatrix matrix;
};

NashAveragingResult nash_averaging(
    const std::vector<const HierarchicalTeamPolicy*>& policies,
    const game::EnvOptions& env, int matrix_episodes, int mixture_episodes,
    std::uint64_t seed);

}  // namespace hcsp::selfplay

#endif  // HCSP_SELFPLAY_HPP_
