#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "hcsp/config.hpp"

namespace fs = std::filesystem;
using namespace hcsp;

namespace {

constexpr const char* kCodeVersion = "hcsp-1.0";

void write_text(const std::string& path, const std::string& content,
                config::RunManifest* manifest = nullptr) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  out.close();
  if (manifest) manifest->add_artifact(path);
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void finish_manifest(config::RunManifest& manifest, const Timer& timer,
                     const std::string& dir) {
  manifest.wall_seconds = timer.seconds();
  write_text(dir + "/manifest.json", manifest.to_json_text());
}

// Per-skill learning-rate overrides.
rl::PpoConfig skill_ppo_for(const config::RunConfig& cfg, skills::SkillId id) {
  rl::PpoConfig ppo = cfg.skill_ppo;
  switch (id) {
    case skills::SkillId::Receive:
    case skills::SkillId::Pass:
    case skills::SkillId::HoverPass:
      ppo.actor_lr = 1e-5;
      ppo.critic_lr = 1e-5;
      break;
    case skills::SkillId::HoverReceive:
      ppo.actor_lr = 1e-4;
      ppo.critic_lr = 1e-4;
      break;
    default:
      break;
  }
  return ppo;
}

std::string curve_csv(const std::vector<double>& values,
                      const char* value_name, int stride = 1) {
  std::ostringstream out;
  out << "iteration," << value_name << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
    out << (i + 1) * stride << ',' << buf << '\n';
  }
  return out.str();
}

int cmd_train_skill(const config::RunConfig& cfg, const std::string& skill,
                    const std::string& prereq_dir) {
  Timer timer;
  skills::SkillId id = skills::skill_from_name(skill);
  game::EnvOptions env = cfg.env_options();
  skills::SkillTrainConfig train = cfg.skill_train_config(cfg.seeds[0]);
  train.ppo = skill_ppo_for(cfg, id);

  std::map<skills::SkillId, net::PolicyParams> prereq;
  skills::SkillTask task = skills::make_skill_task(id, env);
  if (!prereq_dir.empty()) {
    strategy::HierarchicalTeamPolicy source = config::load_policy(prereq_dir);
    for (skills::SkillId p : task.prerequisites) {
      auto it = source.skills.find(p);
      if (it == source.skills.end() || it->second.empty())
        throw std::runtime_error("missing prerequisite checkpoint: " +
                                 skills::skill_name(p));
      prereq.emplace(p, it->second.front());
    }
  }

  skills::SkillTrainResult result =
      skills::chain_train(prereq, task, env, train);

  std::string dir = cfg.output_dir;
  config::RunManifest manifest;
  manifest.command = "train-skill " + skill;
  manifest.config_hash = cfg.hash();
  manifest.code_version = kCodeVersion;
  fs::create_directories(dir);
  std::string ckpt = dir + "/" + skill + ".ckpt";
  net::save_checkpoint(ckpt, result.best_params,
                       {{"kind", "skill:" + skill},
                        {"seed", std::to_string(cfg.seeds[0])},
                        {"config_hash", cfg.hash()}});
  manifest.add_artifact(ckpt);
  write_text(dir + "/" + skill + "_train_curve.csv",
             curve_csv(result.train_curve, "mean_episode_reward"), &manifest);
  write_text(dir + "/" + skill + "_eval_curve.csv",
             curve_csv(result.eval_curve, "mean_eval_reward",
                       cfg.skill_eval_interval),
             &manifest);
  finish_manifest(manifest, timer, dir);
  std::printf("trained %s: best eval reward %.4f -> %s\n", skill.c_str(),
              result.best_eval_reward, ckpt.c_str());
  return 0;
}

int cmd_stage2(const config::RunConfig& cfg, const std::string& skills_dir,
               const std::string& meta, bool no_realloc) {
  Timer timer;
  game::EnvOptions env = cfg.env_options();
  strategy::SkillPool pool;
  if (!skills_dir.empty()) {
    pool = config::load_policy(skills_dir).skills;
    if (pool.empty())
      throw std::runtime_error("no skill checkpoints in " + skills_dir);
  }
  selfplay::Stage2Config s2 = cfg.stage2;
  s2.sample_reallocation = !no_realloc;
  s2.seed = cfg.seeds[0];
  selfplay::MetaSolver solver = selfplay::meta_solver_from_name(meta);

  selfplay::Stage2State state(s2.max_population);
  while (!state.population.full())
    selfplay::psro_iteration(state, solver, pool, env, s2);

  std::string dir = cfg.output_dir + "/stage2";
  config::RunManifest manifest;
  manifest.command = "stage2 --meta " + meta;
  manifest.config_hash = cfg.hash();
  manifest.code_version = kCodeVersion;
  write_text(dir + "/matrix.csv", state.matrix.to_csv(), &manifest);
  write_text(dir + "/matrix_sidecar.json", state.matrix.sidecar_json(),
             &manifest);
  write_text(dir + "/population.json", state.population.manifest_json(),
             &manifest);
  for (std::size_t i = 0; i < state.population.size(); ++i)
    config::save_policy(state.population[i].policy,
                        dir + "/" + state.population[i].name, &manifest);
  finish_manifest(manifest, timer, dir);
  std::printf("stage2 done: population %zu, matrix %dx%d -> %s\n",
              state.population.size(), state.matrix.n, state.matrix.n,
              dir.c_str());
  return 0;
}

int cmd_stage3(const config::RunConfig& cfg, const std::string& stage2_dir,
               bool joint, double kl, const std::string& init_mode) {
  Timer timer;
  game::EnvOptions env = cfg.env_options();
  strategy::HierarchicalTeamPolicy opponent = config::load_policy(stage2_dir);
  if (!opponent.high)
    throw std::runtime_error("missing Stage II high-level checkpoint in " +
                             stage2_dir);
  if (opponent.skills.empty())
    throw std::runtime_error("missing Stage II skill checkpoints in " +
                             stage2_dir);

  selfplay::Stage3Config s3 = cfg.stage3;
  s3.joint_all_skills = joint;
  if (kl >= 0.0) s3.kl.c3 = kl;
  s3.seed = cfg.seeds[0];
  // Only skills with a trained policy can be refined.
  std::erase_if(s3.refinement_order, [&](skills::SkillId id) {
    return !opponent.skills.count(id);
  });
  if (s3.refinement_order.empty())
    throw std::runtime_error("no refinable skills among the Stage II pool");

  selfplay::Stage3Result result =
      selfplay::co_optimize(opponent.skills, *opponent.high, opponent.decode,
                            opponent, env, s3);

  net::HeadInitMode mode = init_mode == "mean"
                               ? net::HeadInitMode::MeanOfExisting
                               : net::HeadInitMode::FromScratch;
  selfplay::Stage2Config relearn = cfg.stage2;
  relearn.seed = cfg.seeds[0];
  net::PolicyParams new_high = selfplay::relearn_high_level(
      result.pool, result.decode, &result.high, opponent, env, relearn, mode);

  std::string dir = cfg.output_dir + "/stage3";
  config::RunManifest manifest;
  manifest.command = "stage3 --init " + init_mode;
  manifest.config_hash = cfg.hash();
  manifest.code_version = kCodeVersion;
  strategy::HierarchicalTeamPolicy refined;
  refined.high = new_high;
  refined.skills = result.pool;
  refined.decode = result.decode;
  refined.name = "stage3";
  config::save_policy(refined, dir + "/refined", &manifest);
  write_text(dir + "/report.json", result.manifest_json(), &manifest);
  finish_manifest(manifest, timer, dir);
  int accepted = 0;
  for (const auto& r : result.reports) accepted += r.accepted ? 1 : 0;
  std::printf("stage3 done: %d/%zu refinements accepted -> %s\n", accepted,
              result.reports.size(), dir.c_str());
  return 0;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& a,
             const std::string& b, std::vector<std::string> tournament,
             int episodes, bool nash_average) {
  Timer timer;
  game::EnvOptions env = cfg.env_options();
  std::string dir = cfg.output_dir + "/eval";
  config::RunManifest manifest;
  manifest.command = "eval";
  manifest.config_hash = cfg.hash();
  manifest.code_version = kCodeVersion;
  std::ostringstream report;

  if (tournament.empty()) {
    strategy::HierarchicalTeamPolicy pa = config::load_policy(a);
    strategy::HierarchicalTeamPolicy pb = config::load_policy(b);
    selfplay::PairResult r =
        selfplay::evaluate_pair(pa, pb, env, episodes, cfg.seeds[0]);
    report << "{\n  \"a\": \"" << a << "\",\n  \"b\": \"" << b
           << "\",\n  \"episodes\": " << r.episodes << ",\n  \"win\": " << r.win
           << ",\n  \"draw\": " << r.draw << ",\n  \"loss\": " << r.loss
           << ",\n  \"score\": " << r.score() << "\n}\n";
    write_text(dir + "/report.json", report.str(), &manifest);
    std::printf("eval %s vs %s: score %.4f (win %.3f draw %.3f loss %.3f)\n",
                a.c_str(), b.c_str(), r.score(), r.win, r.draw, r.loss);
  } else {
    std::vector<strategy::HierarchicalTeamPolicy> policies;
    std::vector<const strategy::HierarchicalTeamPolicy*> refs;
    for (const auto& ref : tournament)
      policies.push_back(config::load_policy(ref));
    for (const auto& p : policies) refs.push_back(&p);
    selfplay::NashAveragingResult r = selfplay::nash_averaging(
        refs, env, episodes, nash_average ? episodes : 0, cfg.seeds[0]);
    write_text(dir + "/matrix.csv", r.matrix.to_csv(), &manifest);
    write_text(dir + "/matrix_sidecar.json", r.matrix.sidecar_json(),
               &manifest);
    report << "{\n  \"policies\": [";
    for (std::size_t i = 0; i < tournament.size(); ++i)
      report << (i ? ", " : "") << '"' << tournament[i] << '"';
    report << "]";
    if (nash_average) {
      report << ",\n  \"nash_weights\": [";
      for (std::size_t i = 0; i < r.weights.size(); ++i)
        report << (i ? ", " : "") << r.weights[i];
      report << "],\n  \"win_rate_vs_mixture\": [";
      for (std::size_t i = 0; i < r.win_rate_vs_mixture.size(); ++i)
        report << (i ? ", " : "") << r.win_rate_vs_mixture[i];
      report << "]";
    }
    report << "\n}\n";
    write_text(dir + "/report.json", report.str(), &manifest);
    std::printf("tournament over %zu policies -> %s\n", tournament.size(),
                dir.c_str());
  }
  finish_manifest(manifest, timer, dir);
  return 0;
}

int cmd_replay(const config::RunConfig& cfg, const std::string& a,
               const std::string& b) {
  Timer timer;
  game::EnvOptions env = cfg.env_options();
  strategy::HierarchicalTeamPolicy pa = config::load_policy(a);
  strategy::HierarchicalTeamPolicy pb = config::load_policy(b);
  strategy::EpisodeOptions opts;
  opts.seed = cfg.seeds[0];
  opts.record_replay = true;
  strategy::EpisodeRecord rec = strategy::run_episode(pa, pb, env, opts);

  std::string dir = cfg.output_dir + "/replay";
  fs::create_directories(dir);
  std::string path = dir + "/episode.replay";
  {
    std::ofstream out(path);
    game::write_replay(out, rec.frames);
  }
  // Round-trip check: the written file must parse back losslessly.
  std::ifstream in(path);
  std::vector<game::ReplayRecord> back = game::read_replay(in);
  if (back.size() != rec.frames.size())
    throw std::runtime_error("replay round-trip lost frames");
  std::size_t events = 0, events_back = 0;
  for (const auto& f : rec.frames) events += f.events.size();
  for (const auto& f : back) events_back += f.events.size();
  if (events != events_back)
    throw std::runtime_error("replay round-trip lost events");

  config::RunManifest manifest;
  manifest.command = "replay";
  manifest.config_hash = cfg.hash();
  manifest.code_version = kCodeVersion;
  manifest.add_artifact(path);
  finish_manifest(manifest, timer, dir);
  std::printf("replay: %zu frames, %zu events, outcome %s -> %s\n",
              rec.frames.size(), events,
              rec.outcome.result == game::Outcome::Result::Draw
                  ? "draw"
                  : (rec.outcome.winner == game::Team::Team1 ? "team1"
                                                             : "team2"),
              path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3v3 multi-drone volleyball: hierarchical co-self-play lab"};
  app.require_subcommand(1);

  std::string config_path, preset = "desk_scale", output_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--run-config", config_path, "JSON run-config file");
  app.add_option("--preset", preset, "preset when no config file is given")
      ->check(CLI::IsMember({"desk_scale", "paper_scale"}));
  app.add_option("--out", output_dir, "output directory override");
  auto* seed_opt = app.add_option("--seed", seed, "seed override");

  std::string skill, prereq_dir;
  auto* train = app.add_subcommand("train-skill", "Stage I: train one skill");
  train->add_option("--skill", skill, "skill name")->required();
  train->add_option("--prereq-dir", prereq_dir,
                    "policy directory with prerequisite checkpoints");

  std::string skills_dir, meta = "nash";
  bool no_realloc = false;
  auto* stage2 = app.add_subcommand("stage2", "Stage II: PSRO self-play");
  stage2->add_option("--skills-dir", skills_dir,
                     "policy directory with the Stage I skill pool");
  stage2->add_option("--meta", meta, "meta-solver")
      ->check(CLI::IsMember({"uniform", "nash", "latest", "fsp"}));
  stage2->add_flag("--no-sample-reallocation", no_realloc,
                   "standard minibatch sampling ablation");

  std::string stage2_dir, init_mode = "scratch";
  bool joint = false;
  double kl = -1.0;
  auto* stage3 = app.add_subcommand("stage3", "Stage III: co-self-play");
  stage3->add_option("--stage2-dir", stage2_dir,
                     "policy directory with Stage II artifacts")
      ->required();
  stage3->add_flag("--joint-all-skills", joint,
                   "refine every skill simultaneously (ablation)");
  stage3->add_option("--kl", kl, "KL reward coefficient c3 override");
  stage3->add_option("--init", init_mode, "relearn initialization")
      ->check(CLI::IsMember({"scratch", "mean"}));

  std::string ref_a = "bot", ref_b = "bot";
  std::vector<std::string> tournament;
  int episodes = 100;
  bool nash_average = false;
  auto* eval = app.add_subcommand("eval", "pairwise or tournament evaluation");
  eval->add_option("--a", ref_a, "first policy ('bot' or directory)");
  eval->add_option("--b", ref_b, "second policy");
  eval->add_option("--tournament", tournament,
                   "policy list for a round-robin matrix");
  eval->add_option("--episodes", episodes, "episodes per pairing");
  eval->add_flag("--nash-average", nash_average,
                 "append Nash mixture weights to the report");

  std::string rep_a = "bot", rep_b = "bot";
  auto* replay = app.add_subcommand("replay", "record one episode");
  replay->add_option("--a", rep_a, "first policy");
  replay->add_option("--b", rep_b, "second policy");

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;

  try {
    config::RunConfig cfg = config_path.empty()
                                ? config::RunConfig::preset_config(preset)
                                : config::RunConfig::load_file(config_path);
    config::apply_env_overrides(cfg);
    if (seed_set) cfg.seeds = {seed};
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (cfg.seeds.empty()) cfg.seeds = {0};

    if (train->parsed()) return cmd_train_skill(cfg, skill, prereq_dir);
    if (stage2->parsed()) return cmd_stage2(cfg, skills_dir, meta, no_realloc);
    if (stage3->parsed())
      return cmd_stage3(cfg, stage2_dir, joint, kl, init_mode);
    if (eval->parsed())
      return cmd_eval(cfg, ref_a, ref_b, tournament, episodes, nash_average);
    if (replay->parsed()) return cmd_replay(cfg, rep_a, rep_b);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
