#include "hcsp/selfplay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hcsp::selfplay {

using game::EnvOptions;
using game::Outcome;
using game::Team;
using json = nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Score for the first team of a finished match: win 1, draw 1/2, loss 0.
double match_score(const Outcome& outcome) {
  if (outcome.result == Outcome::Result::Draw) return 0.5;
  return outcome.winner == Team::Team1 ? 1.0 : 0.0;
}

int sample_index(const std::vector<double>& weights, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

std::vector<double> normalized(const std::vector<double>& v) {
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  std::vector<double> out(v.size());
  if (s <= 0.0) {
    std::fill(out.begin(), out.end(), 1.0 / v.size());
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / s;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Population

void Population::add(PopulationMember member) {
  if (full())
    throw std::logic_error("population is append-only and already full");
  members_.push_back(std::move(member));
}

std::string Population::manifest_json() const {
  json j;
  j["max_size"] = max_size_;
  j["members"] = json::array();
  for (const auto& m : members_) {
    json e;
    e["name"] = m.name;
    e["parent"] = m.parent;
    e["stage"] = m.stage;
    e["seed"] = m.seed;
    e["insertion_win_rate"] = m.insertion_win_rate;
    e["inserted_at_cap"] = m.inserted_at_cap;
    e["training_updates"] = m.training_updates;
    e["skill_pool_hash"] = strategy::pool_manifest_hash(m.policy.skills);
    e["high_level"] = m.policy.high.has_value() ? "network" : "bot";
    j["members"].push_back(std::move(e));
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// WinRateMatrix

void WinRateMatrix::grow(int m) {
  if (m < n) throw std::logic_error("win-rate matrix cannot shrink");
  std::vector<double> w(m * m, 0.0), d(m * m, 0.0);
  std::vector<int> e(m * m, 0);
  std::vector<std::uint64_t> s(m * m, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      w[i * m + j] = win[i * n + j];
      d[i * m + j] = draw[i * n + j];
      e[i * m + j] = episodes[i * n + j];
      s[i * m + j] = seeds[i * n + j];
    }
  n = m;
  win = std::move(w);
  draw = std::move(d);
  episodes = std::move(e);
  seeds = std::move(s);
}

std::string WinRateMatrix::to_csv() const {
  std::ostringstream out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j) out << ',';
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", win_at(i, j));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string WinRateMatrix::sidecar_json() const {
  json j;
  j["n"] = n;
  j["draw"] = draw;
  j["episodes"] = episodes;
  j["seeds"] = seeds;
  return j.dump(2);
}

MetaSolver meta_solver_from_name(const std::string& name) {
  if (name == "nash") return MetaSolver::Nash;
  if (name == "uniform") return MetaSolver::Uniform;
  if (name == "latest") return MetaSolver::LatestOnly;
  if (name == "fsp") return MetaSolver::HistoricalAverage;
  throw std::invalid_argument("unknown meta-solver: " + name);
}

std::string meta_solver_name(MetaSolver solver) {
  switch (solver) {
    case MetaSolver::Nash: return "nash";
    case MetaSolver::Uniform: return "uniform";
    case MetaSolver::LatestOnly: return "latest";
    case MetaSolver::HistoricalAverage: return "fsp";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Match evaluation

PairResult evaluate_pair(const HierarchicalTeamPolicy& a,
                         const HierarchicalTeamPolicy& b,
                         const EnvOptions& env, int episodes,
                         std::uint64_t seed) {
  int pairs = std::max(1, (episodes + 1) / 2);
  PairResult out;
  out.episodes = 2 * pairs;
  for (int p = 0; p < pairs; ++p) {
    strategy::EpisodeOptions opts;
    opts.seed = mix_seed(seed, static_cast<std::uint64_t>(p));
    // Same seed, sides swapped: identical policies mirror exactly.
    double s1 = match_score(strategy::run_episode(a, b, env, opts).outcome);
    double s2 =
        1.0 - match_score(strategy::run_episode(b, a, env, opts).outcome);
    for (double s : {s1, s2}) {
      if (s > 0.75)
        out.win += 1.0;
      else if (s < 0.25)
        out.loss += 1.0;
      else
        out.draw += 1.0;
    }
  }
  out.win /= out.episodes;
  out.draw /= out.episodes;
  out.loss /= out.episodes;
  return out;
}

// ---------------------------------------------------------------------------
// Zero-sum solving

std::vector<std::vector<double>> payoffs_from_win_rates(
    const std::vector<std::vector<double>>& win_rates) {
  auto out = win_rates;
  for (auto& row : out)
    for (double& v : row) v = 2.0 * v - 1.0;
  return out;
}

double duality_gap(const std::vector<std::vector<double>>& payoffs,
                   const std::vector<double>& row,
                   const std::vector<double>& col) {
  std::size_t n = payoffs.size(), m = payoffs[0].size();
  double best_row = -1e300, best_col = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.0;
    for (std::size_t j = 0; j < m; ++j) u += payoffs[i][j] * col[j];
    best_row = std::max(best_row, u);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += payoffs[i][j] * row[i];
    best_col = std::min(best_col, v);
  }
  return best_row - best_col;
}

namespace {

// Gaussian elimination with partial pivoting; returns false when singular.
bool solve_linear(std::vector<std::vector<double>> mat, std::vector<double>& b) {
  std::size_t k = b.size();
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(mat[r][col]) > std::abs(mat[pivot][col])) pivot = r;
    if (std::abs(mat[pivot][col]) < 1e-12) return false;
    std::swap(mat[col], mat[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      double f = mat[r][col] / mat[col][col];
      for (std::size_t c = col; c < k; ++c) mat[r][c] -= f * mat[col][c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = 0; i < k; ++i) b[i] /= mat[i][i];
  return true;
}

// Given approximate equilibrium supports of equal size, solves the exact
// equalizing strategies on those supports. Returns false when the supports
// are unusable (different sizes, singular system, or negative weights).
bool polish_on_support(const std::vector<std::vector<double>>& a,
                       std::vector<double>& x, std::vector<double>& y,
                       double support_eps) {
  std::size_t n = a.size(), m = a[0].size();
  std::vector<std::size_t> sr, sc;
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > support_eps) sr.push_back(i);
  for (std::size_t j = 0; j < m; ++j)
    if (y[j] > support_eps) sc.push_back(j);
  if (sr.empty() || sr.size() != sc.size()) return false;
  std::size_t k = sr.size();

  // Row strategy equalizes the payoff over the column support (plus the
  // simplex constraint); unknowns are the k weights and the game value.
  std::vector<std::vector<double>> mr(k + 1, std::vector<double>(k + 1, 0.0));
  std::vector<double> br(k + 1, 0.0);
  for (std::size_t jj = 0; jj < k; ++jj) {
    for (std::size_t ii = 0; ii < k; ++ii) mr[jj][ii] = a[sr[ii]][sc[jj]];
    mr[jj][k] = -1.0;
  }
  for (std::size_t ii = 0; ii < k; ++ii) mr[k][ii] = 1.0;
  br[k] = 1.0;
  if (!solve_linear(mr, br)) return false;

  std::vector<std::vector<double>> mc(k + 1, std::vector<double>(k + 1, 0.0));
  std::vector<double> bc(k + 1, 0.0);
  for (std::size_t ii = 0; ii < k; ++ii) {
    for (std::size_t jj = 0; jj < k; ++jj) mc[ii][jj] = a[sr[ii]][sc[jj]];
    mc[ii][k] = -1.0;
  }
  for (std::size_t jj = 0; jj < k; ++jj) mc[k][jj] = 1.0;
  bc[k] = 1.0;
  if (!solve_linear(mc, bc)) return false;

  for (std::size_t i = 0; i < k; ++i)
    if (br[i] < -1e-9 || bc[i] < -1e-9) return false;

  std::vector<double> px(n, 0.0), py(m, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    px[sr[i]] = std::max(0.0, br[i]);
    py[sc[i]] = std::max(0.0, bc[i]);
  }
  x = normalized(px);
  y = normalized(py);
  return true;
}

}  // namespace

NashResult solve_zero_sum(const std::vector<std::vector<double>>& win_rates,
                          double tolerance, long max_iterations) {
  auto a = payoffs_from_win_rates(win_rates);
  std::size_t n = a.size(), m = a[0].size();
  NashResult res;
  if (n == 1 && m == 1) {
    res.row_strategy = {1.0};
    res.col_strategy = {1.0};
    res.value = a[0][0];
    res.iterations = 0;
    res.exploitability = 0.0;
    return res;
  }

  std::vector<double> r_row(n, 0.0), r_col(m, 0.0);
  std::vector<double> x(n, 1.0 / n), y(m, 1.0 / m);
  std::vector<double> avg_x(n, 0.0), avg_y(m, 0.0);

  for (long t = 1; t <= max_iterations; ++t) {
    // Alternating regret updates: the column player responds to the row
    // player's fresh strategy within the same iteration. This converges far
    // faster than simultaneous updates in practice.
    std::vector<double> u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) u[i] += a[i][j] * y[j];
    double row_value = 0.0;
    for (std::size_t i = 0; i < n; ++i) row_value += x[i] * u[i];
    for (std::size_t i = 0; i < n; ++i)
      r_row[i] = std::max(0.0, r_row[i] + u[i] - row_value);
    x = normalized(r_row);

    std::vector<double> v(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < n; ++i) v[j] += a[i][j] * x[i];
    double col_value = 0.0;
    for (std::size_t j = 0; j < m; ++j) col_value += y[j] * v[j];
    for (std::size_t j = 0; j < m; ++j)
      r_col[j] = std::max(0.0, r_col[j] + col_value - v[j]);
    y = normalized(r_col);

    // Quadratically weighted averaging: later iterates weigh much more,
    // which empirically sharpens the tail convergence of RM+.
    double w = static_cast<double>(t) * static_cast<double>(t);
    for (std::size_t i = 0; i < n; ++i) avg_x[i] += w * x[i];
    for (std::size_t j = 0; j < m; ++j) avg_y[j] += w * y[j];

    if (t % 64 == 0 || t == max_iterations) {
      auto rx = normalized(avg_x), ry = normalized(avg_y);
      double gap = duality_gap(a, rx, ry);
      if (gap > tolerance) {
        // Once the iterates are decent the support is usually identified;
        // an exact equalizing solve on it finishes the job.
        auto px = rx, py = ry;
        if (polish_on_support(a, px, py, 1e-6)) {
          double pgap = duality_gap(a, px, py);
          if (pgap < gap) {
            gap = pgap;
            rx = std::move(px);
            ry = std::move(py);
          }
        }
      }
      if (gap <= tolerance || t == max_iterations) {
        res.row_strategy = std::move(rx);
        res.col_strategy = std::move(ry);
        res.exploitability = gap;
        res.iterations = static_cast<int>(t);
        res.value = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            res.value += res.row_strategy[i] * a[i][j] * res.col_strategy[j];
        return res;
      }
    }
  }
  return res;  // unreachable
}

std::vector<double> meta_distribution(MetaSolver solver,
                                      const WinRateMatrix& matrix, int n) {
  if (n <= 0) throw std::invalid_argument("empty population");
  std::vector<double> dist(n, 0.0);
  switch (solver) {
    case MetaSolver::Uniform:
    case MetaSolver::HistoricalAverage:
      std::fill(dist.begin(), dist.end(), 1.0 / n);
      break;
    case MetaSolver::LatestOnly:
      dist[n - 1] = 1.0;
      break;
    case MetaSolver::Nash: {
      if (n == 1) {
        dist[0] = 1.0;
        break;
      }
      std::vector<std::vector<double>> w(n, std::vector<double>(n));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w[i][j] = matrix.win_at(i, j);
      dist = solve_zero_sum(w).row_strategy;
      break;
    }
  }
  return dist;
}

// ---------------------------------------------------------------------------
// Candidate training (shared by Stage II and the high-level relearn)

namespace {

// Drops non-anchor steps, each anchor keeping only its own single-step
// reward (the no-reallocation ablation).
rl::Trajectory anchors_only(const rl::Trajectory& traj) {
  rl::Trajectory out;
  for (const auto& tr : traj.transitions)
    if (tr.event_step) out.transitions.push_back(tr);
  if (!out.transitions.empty() && !traj.transitions.empty())
    out.transitions.back().done = traj.transitions.back().done;
  return out;
}

rl::Trajectory high_trajectory(const rl::Trajectory& raw,
                               const Stage2Config& config) {
  rl::Trajectory out;
  if (config.sample_reallocation)
    out.transitions = rl::sample_reallocation(raw, config.ppo.gamma);
  else
    out = anchors_only(raw);
  return out;
}

using OpponentFn =
    std::function<const HierarchicalTeamPolicy&(Rng&)>;

// Updates only when the batch can fill every minibatch.
rl::UpdateStats safe_update(rl::PpoLearner& learner, int minibatches,
                            const std::vector<rl::Trajectory>& trajs,
                            Rng& rng) {
  std::size_t samples = 0;
  for (const auto& t : trajs) samples += t.transitions.size();
  if (samples < static_cast<std::size_t>(minibatches)) return {};
  return learner.update(trajs, rng);
}

double gate_win_rate(const HierarchicalTeamPolicy& candidate,
                     const OpponentFn& opponent, const EnvOptions& env,
                     int episodes, Rng& rng) {
  double score = 0.0;
  int pairs = std::max(1, episodes / 2);
  for (int p = 0; p < pairs; ++p) {
    const HierarchicalTeamPolicy& opp = opponent(rng);
    PairResult r = evaluate_pair(candidate, opp, env, 2, rng.raw());
    score += r.score();
  }
  return score / pairs;
}

struct TrainedCandidate {
  net::PolicyParams params;
  double gate_win = 0.0;
  bool at_cap = false;
  int updates = 0;
};

TrainedCandidate train_high_candidate(net::PolicyParams initial,
                                      const OpponentFn& opponent,
                                      const SkillPool& pool,
                                      const strategy::DecodeOptions& decode,
                                      const EnvOptions& env,
                                      const Stage2Config& config, Rng& rng,
                                      bool use_gate) {
  rl::PpoLearner learner(std::move(initial), config.ppo);
  TrainedCandidate out;
  for (int update = 1; update <= config.max_updates; ++update) {
    HierarchicalTeamPolicy team1;
    team1.high = learner.params();
    team1.skills = pool;
    team1.decode = decode;
    team1.name = "candidate";

    std::vector<rl::Trajectory> trajs;
    for (int e = 0; e < config.episodes_per_update; ++e) {
      strategy::EpisodeOptions opts;
      opts.seed = rng.raw();
      opts.high_rng = &rng;
      opts.record_high = true;
      opts.reward = config.reward;
      strategy::EpisodeRecord rec =
          strategy::run_episode(team1, opponent(rng), env, opts);
      rl::Trajectory traj = high_trajectory(rec.high[0], config);
      if (!traj.transitions.empty()) trajs.push_back(std::move(traj));
    }
    rl::UpdateStats stats = safe_update(learner, config.ppo.minibatches, trajs, rng);
    out.updates = update;
    if (stats.aborted) break;

    if (use_gate && update >= config.min_updates) {
      HierarchicalTeamPolicy eval_policy = team1;
      eval_policy.high = learner.params();
      out.gate_win = gate_win_rate(eval_policy, opponent, env,
                                   config.gate_episodes, rng);
      if (out.gate_win > config.win_rate_threshold) {
        out.params = learner.params();
        return out;
      }
    }
  }
  out.at_cap = use_gate;
  out.params = learner.params();
  if (use_gate && out.updates > 0 && out.gate_win == 0.0) {
    HierarchicalTeamPolicy eval_policy;
    eval_policy.high = out.params;
    eval_policy.skills = pool;
    eval_policy.decode = decode;
    out.gate_win =
        gate_win_rate(eval_policy, opponent, env, config.gate_episodes, rng);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage II

void psro_iteration(Stage2State& state, MetaSolver solver,
                    const SkillPool& skill_pool, const EnvOptions& env,
                    const Stage2Config& config) {
  Population& pop = state.population;
  if (pop.full())
    throw std::logic_error("population already at capacity");

  if (pop.size() == 0) {
    // Seed generation: the rule-based strategy over the trained skills.
    PopulationMember m;
    m.policy.skills = skill_pool;
    m.policy.name = "gen0";
    m.name = "gen0";
    m.parent = "";
    m.seed = config.seed;
    m.insertion_win_rate = 0.5;
    state.matrix.grow(1);
    state.matrix.win_at(0, 0) = 0.5;
    state.matrix.seeds[0] = config.seed;
    pop.add(std::move(m));
    state.mixture = {1.0};
    return;
  }

  int n = static_cast<int>(pop.size());
  state.mixture = meta_distribution(solver, state.matrix, n);

  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(n)));
  strategy::DecodeOptions decode;  // Stage II uses the base catalogs
  net::MlpSpec spec;
  spec.input_dim = strategy::kHighObsDim;
  spec.hidden = config.hidden;
  spec.head_kind = net::HeadKind::MultiCategorical;
  spec.head_sizes = decode.head_sizes();

  OpponentFn opponent = [&](Rng& r) -> const HierarchicalTeamPolicy& {
    return pop[sample_index(state.mixture, r)].policy;
  };
  TrainedCandidate trained =
      train_high_candidate(net::PolicyParams::init(spec, rng), opponent,
                           skill_pool, decode, env, config, rng,
                           /*use_gate=*/true);

  PopulationMember m;
  m.policy.high = trained.params;
  m.policy.skills = skill_pool;
  m.policy.decode = decode;
  m.policy.name = "gen" + std::to_string(n);
  m.name = m.policy.name;
  m.parent = pop[n - 1].name;
  m.seed = config.seed;
  m.insertion_win_rate = trained.gate_win;
  m.inserted_at_cap = trained.at_cap;
  m.training_updates = trained.updates;
  pop.add(std::move(m));

  state.matrix.grow(n + 1);
  state.matrix.win_at(n, n) = 0.5;
  for (int j = 0; j < n; ++j) {
    std::uint64_t cell_seed = mix_seed(config.seed, 1000 + n * 64 + j);
    PairResult r = evaluate_pair(pop[n].policy, pop[j].policy, env,
                                 config.eval_episodes, cell_seed);
    state.matrix.win_at(n, j) = r.score();
    state.matrix.win_at(j, n) = 1.0 - r.score();
    state.matrix.draw_at(n, j) = r.draw;
    state.matrix.draw_at(j, n) = r.draw;
    state.matrix.episodes[n * state.matrix.n + j] = r.episodes;
    state.matrix.episodes[j * state.matrix.n + n] = r.episodes;
    state.matrix.seeds[n * state.matrix.n + j] = cell_seed;
    state.matrix.seeds[j * state.matrix.n + n] = cell_seed;
  }
  state.mixture =
      meta_distribution(solver, state.matrix, static_cast<int>(pop.size()));
}

// ---------------------------------------------------------------------------
// Stage III

namespace {

struct Snapshot {
  std::map<skills::SkillId, net::PolicyParams> lows;
  net::PolicyParams high;
  double win_rate = 0.0;
  int iteration = 0;
};

}  // namespace

std::string Stage3Result::manifest_json() const {
  json j;
  j["skill_pool_hash"] = strategy::pool_manifest_hash(pool);
  j["reports"] = json::array();
  for (const auto& r : reports) {
    json e;
    e["skill"] = skills::skill_name(r.skill);
    e["selected"] = r.selected;
    e["accepted"] = r.accepted;
    e["selected_win_rate"] = r.selected_win_rate;
    e["checkpoints"] = json::array();
    for (const auto& c : r.checkpoints)
      e["checkpoints"].push_back(
          {{"iteration", c.iteration}, {"win_rate", c.win_rate}});
    j["reports"].push_back(std::move(e));
  }
  return j.dump(2);
}

Stage3Result co_optimize(const SkillPool& pool,
                         const net::PolicyParams& high_strategy,
                         const strategy::DecodeOptions& decode,
                         const HierarchicalTeamPolicy& frozen_opponent,
                         const EnvOptions& env, const Stage3Config& config) {
  Stage3Result result;
  result.pool = pool;
  result.decode = decode;
  result.high = high_strategy;

  std::vector<std::vector<skills::SkillId>> rounds;
  if (config.joint_all_skills)
    rounds.push_back(config.refinement_order);
  else
    for (auto s : config.refinement_order) rounds.push_back({s});

  Rng rng(mix_seed(config.seed, 0x5747334ull));

  for (const auto& round : rounds) {
    // Clone the current best variant of each skill in the round; the clone
    // source stays frozen as the KL anchor (Eq. 2).
    std::map<skills::SkillId, net::PolicyParams> references;
    std::map<skills::SkillId, std::unique_ptr<rl::PpoLearner>> low_learners;
    for (auto s : round) {
      auto it = result.pool.find(s);
      if (it == result.pool.end() || it->second.empty())
        throw std::logic_error("no trained policy to refine for " +
                               skills::skill_name(s));
      references.emplace(s, it->second.back());
      low_learners.emplace(s, std::make_unique<rl::PpoLearner>(
                                  it->second.back(), config.low_ppo));
    }
    rl::PpoLearner high_learner(result.high, config.high_ppo);

    auto make_team = [&]() {
      HierarchicalTeamPolicy team;
      team.high = high_learner.params();
      team.skills = result.pool;
      for (auto& [s, learner] : low_learners)
        team.skills[s] = {learner->params()};
      team.decode = result.decode;
      team.name = "refine";
      return team;
    };

    std::vector<Snapshot> snapshots;
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
      for (auto s : round) {
        HierarchicalTeamPolicy team1 = make_team();
        std::vector<rl::Trajectory> high_trajs, low_trajs;
        for (int e = 0; e < config.episodes_per_iteration; ++e) {
          strategy::EpisodeOptions opts;
          opts.seed = rng.raw();
          opts.high_rng = &rng;
          opts.low_rng = &rng;
          opts.record_high = true;
          opts.record_skill = s;
          opts.kl_reference = &references.at(s);
          opts.kl_c3 = config.kl.c3;
          opts.reward = config.reward;
          strategy::EpisodeRecord rec =
              strategy::run_episode(team1, frozen_opponent, env, opts);
          rl::Trajectory high;
          high.transitions =
              rl::sample_reallocation(rec.high[0], config.high_ppo.gamma);
          if (!high.transitions.empty()) high_trajs.push_back(std::move(high));
          if (!rec.low.transitions.empty())
            low_trajs.push_back(std::move(rec.low));
        }
        safe_update(high_learner, config.high_ppo.minibatches, high_trajs,
                    rng);
        safe_update(*low_learners.at(s), config.low_ppo.minibatches, low_trajs,
                    rng);
      }

      if (iter % config.checkpoint_interval == 0) {
        Snapshot snap;
        snap.iteration = iter;
        for (auto& [s, learner] : low_learners)
          snap.lows.emplace(s, learner->params());
        snap.high = high_learner.params();
        PairResult r =
            evaluate_pair(make_team(), frozen_opponent, env,
                          config.eval_episodes, mix_seed(config.seed, iter));
        snap.win_rate = r.score();
        snapshots.push_back(std::move(snap));
      }
    }

    int best = 0;
    for (std::size_t k = 1; k < snapshots.size(); ++k)
      if (snapshots[k].win_rate > snapshots[best].win_rate)
        best = static_cast<int>(k);
    const Snapshot& chosen = snapshots[best];
    bool accepted = chosen.win_rate > config.accept_threshold;

    for (auto s : round) {
      SkillRefinementReport report;
      report.skill = s;
      for (const auto& snap : snapshots)
        report.checkpoints.push_back({snap.iteration, snap.win_rate});
      report.selected = best;
      report.accepted = accepted;
      report.selected_win_rate = chosen.win_rate;
      result.reports.push_back(std::move(report));
    }

    if (accepted) {
      for (auto s : round) {
        auto& variants = result.pool[s];
        variants.push_back(chosen.lows.at(s));
        strategy::ExtraOption opt;
        opt.head = skills::role_of(s);
        opt.skill = s;
        opt.variant = static_cast<int>(variants.size()) - 1;
        result.decode.extras.push_back(opt);
      }
      result.high = chosen.high;
    }
  }
  return result;
}

net::PolicyParams relearn_high_level(const SkillPool& pool,
                                     const strategy::DecodeOptions& decode,
                                     const net::PolicyParams* old_high,
                                     const HierarchicalTeamPolicy& opponent,
                                     const EnvOptions& env,
                                     const Stage2Config& config,
                                     net::HeadInitMode mode) {
  Rng rng(mix_seed(config.seed, 0x4833ull));
  std::vector<int> sizes = decode.head_sizes();
  net::PolicyParams initial;
  if (mode == net::HeadInitMode::MeanOfExisting && old_high != nullptr) {
    initial = net::expand_heads(*old_high, sizes, mode, rng);
  } else {
    net::MlpSpec spec;
    spec.input_dim = strategy::kHighObsDim;
    spec.hidden = config.hidden;
    spec.head_kind = net::HeadKind::MultiCategorical;
    spec.head_sizes = sizes;
    initial = net::PolicyParams::init(spec, rng);
  }
  OpponentFn fixed = [&](Rng&) -> const HierarchicalTeamPolicy& {
    return opponent;
  };
  return train_high_candidate(std::move(initial), fixed, pool, decode, env,
                              config, rng, /*use_gate=*/false)
      .params;
}

// ---------------------------------------------------------------------------
// Nash averaging

NashAveragingResult nash_averaging(
    const std::vector<const HierarchicalTeamPolicy*>& policies,
    const EnvOptions& env, int matrix_episodes, int mixture_episodes,
    std::uint64_t seed) {
  int n = static_cast<int>(policies.size());
  if (n == 0) throw std::invalid_argument("no policies to average");
  NashAveragingResult out;
  out.matrix.grow(n);
  for (int i = 0; i < n; ++i) {
    out.matrix.win_at(i, i) = 0.5;
    for (int j = i + 1; j < n; ++j) {
      std::uint64_t cell_seed = mix_seed(seed, i * 64 + j);
      PairResult r = evaluate_pair(*policies[i], *policies[j], env,
                                   matrix_episodes, cell_seed);
      out.matrix.win_at(i, j) = r.score();
      out.matrix.win_at(j, i) = 1.0 - r.score();
      out.matrix.draw_at(i, j) = r.draw;
      out.matrix.draw_at(j, i) = r.draw;
      out.matrix.episodes[i * n + j] = r.episodes;
      out.matrix.episodes[j * n + i] = r.episodes;
      out.matrix.seeds[i * n + j] = cell_seed;
      out.matrix.seeds[j * n + i] = cell_seed;
    }
  }

  if (n == 1) {
    out.weights = {1.0};
  } else {
    std::vector<std::vector<double>> w(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w[i][j] = out.matrix.win_at(i, j);
    out.weights = solve_zero_sum(w).row_strategy;
  }

  out.win_rate_vs_mixture.resize(n, 0.0);
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, 0xA00 + i));
    double score = 0.0;
    int pairs = std::max(1, mixture_episodes / 2);
    for (int p = 0; p < pairs; ++p) {
      int j = sample_index(out.weights, rng);
      PairResult r = evaluate_pair(*policies[i], *policies[j], env, 2,
                                   rng.raw());
      score += r.score();
    }
    out.win_rate_vs_mixture[i] = score / pairs;
  }
  return out;
}

}  // namespace hcsp::selfplay
