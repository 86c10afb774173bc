#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lifeline/envs/task_sequence.hpp"
#include "lifeline/harness/agent.hpp"
#include "lifeline/harness/csv.hpp"
#include "lifeline/metrics.hpp"

namespace lifeline::harness {

/// One row of the diagnostics log.
struct UpdateLog {
  std::int64_t global_step = 0;
  std::string task_id;
  std::size_t entry_index = 0;
  UpdateReport report;
  double lambda = 0.0;
  std::optional<double> episodic_cost;  // mean over episodes that ended in the window
  double cost_limit = 0.0;
  double step_cost = 0.0;  // mean per-step cost over the rollout
};

struct SeedResult {
  RunSeed seed;
  std::vector<EpisodeRecord> episodes;
  std::vector<UpdateLog> updates;
  std::vector<metrics::TaskSummary> summary;
  bool failed = false;
  std::string error;
  GaussianPolicy policy;
  Mlp critic;
  Mlp cost_critic;
  EwcMemory memory;
};

struct RunHooks {
  std::function<void(const Agent&, const UpdateLog&)> after_update;
};

inline constexpr const char* kDiagnosticsHeader =
    "global_step,task_id,entry_index,actor_loss,value_loss,cost_value_loss,entropy,approx_kl,clip_fraction,epochs,"
    "lambda,episodic_cost,cost_limit,step_cost";

inline void write_diagnostics_row(std::ostream& out, const UpdateLog& u) {
  const UpdateReport& r = u.report;
  out << u.global_step << ',' << u.task_id << ',' << u.entry_index << ',' << fmt_double(r.actor_loss) << ','
      << fmt_double(r.value_loss) << ',' << fmt_double(r.cost_value_loss) << ',' << fmt_double(r.entropy) << ','
      << fmt_double(r.approx_kl) << ',' << fmt_double(r.clip_fraction) << ',' << r.epochs_run << ','
      << fmt_double(u.lambda) << ',' << fmt_optional(u.episodic_cost) << ',' << fmt_double(u.cost_limit) << ','
      << fmt_double(u.step_cost) << '\n';
}

namespace detail {

inline void save_agent(const std::filesystem::path& dir, const Agent& agent, const std::string& suffix) {
  save_policy((dir / ("policy" + suffix + ".ckpt")).string(), agent.policy());
  if (suffix.empty()) {
    save_mlp((dir / "critic.ckpt").string(), agent.critic());
    save_mlp((dir / "cost_critic.ckpt").string(), agent.cost_critic());
    if (agent.traits().ewc) {
      std::ofstream m(dir / "ewc_memory.txt");
      write_ewc_memory(m, agent.memory());
    }
  }
}

}  // namespace detail

/// Trains one seed over the whole schedule. With `dir` set, episodes and
/// diagnostics stream to CSV there and checkpoints are written.
inline SeedResult run_seed(const ExperimentConfig& cfg, RunSeed seed, const RunHooks& hooks = {},
                           const std::optional<std::filesystem::path>& dir = std::nullopt) {
  SeedResult res;
  res.seed = seed;
  envs::TaskSequenceEnv env(cfg.family(), cfg.schedule());
  Agent agent = assemble(cfg, env.observation_dim(), env.action_dim(), seed);

  std::ofstream episodes_out;
  std::ofstream diag_out;
  if (dir) {
    std::filesystem::create_directories(*dir);
    episodes_out.open(*dir / "episodes.csv");
    diag_out.open(*dir / "diagnostics.csv");
    if (!episodes_out || !diag_out) throw StateError("cannot write into " + dir->string());
    episodes_out << kEpisodeHeader << '\n';
    diag_out << kDiagnosticsHeader << '\n';
  }

  Rng env_rng = Rng::stream(seed.value, "env");
  Rng act_rng = Rng::stream(seed.value, "act");
  Rng upd_rng = Rng::stream(seed.value, "update");
  Rng fisher_rng = Rng::stream(seed.value, "fisher");

  RolloutBuffer buffer(cfg.ppo.update_interval);
  std::vector<double> window_costs;
  Vector obs = env.reset(env_rng);
  EpisodeRecord ep;
  ep.task_id = env.current_task();
  ep.visit_index = env.current_visit();

  try {
    while (!env.finished()) {
      const std::string task = env.current_task();
      const std::size_t entry = env.entry_index();
      const auto sample = agent.policy().sample(obs, act_rng);
      const double value = agent.critic().forward(obs)[0];
      const double cost_value = agent.cost_critic().forward(obs)[0];
      StepResult r = env.step(sample.action, env_rng);
      const bool done = r.terminated || r.truncated;

      ep.total_reward += r.reward;
      ep.total_cost += r.cost;
      ++ep.length;
      buffer.push({obs, sample.action, agent.stored_reward(r.reward, r.cost), r.cost, r.observation, r.terminated,
                   r.truncated, sample.log_prob, value, cost_value, task});

      if (done) {
        ep.global_step = env.global_step();
        if (env.has_success()) ep.success = r.success;
        if (dir) write_episode_row(episodes_out, ep);
        window_costs.push_back(ep.total_cost);
        res.episodes.push_back(std::move(ep));
        ep = EpisodeRecord{};
      }

      if (buffer.full()) {
        std::optional<double> jc;
        if (!window_costs.empty()) {
          double s = 0.0;
          for (const double c : window_costs) s += c;
          jc = s / static_cast<double>(window_costs.size());
        }
        double step_cost = 0.0;
        for (const auto& t : buffer.transitions()) step_cost += t.cost;
        step_cost /= static_cast<double>(buffer.size());

        UpdateLog log;
        log.report = agent.update(buffer.transitions(), jc, upd_rng);
        log.global_step = env.global_step();
        log.task_id = task;
        log.entry_index = entry;
        log.lambda = agent.controller().lambda;
        log.episodic_cost = jc;
        log.cost_limit = agent.controller().cost_limit;
        log.step_cost = step_cost;
        buffer.clear();
        window_costs.clear();
        if (dir) write_diagnostics_row(diag_out, log);
        if (hooks.after_update) hooks.after_update(agent, log);
        res.updates.push_back(std::move(log));
      }

      if (env.entry_just_ended()) {
        // A partial rollout never carries over into the next task.
        buffer.clear();
        window_costs.clear();
        auto task_env = env.make_task_env(task);
        agent.finish_task(*task_env, task, fisher_rng);
      }

      if (dir && cfg.checkpoint_interval > 0 && env.global_step() % cfg.checkpoint_interval == 0) {
        detail::save_agent(*dir, agent, "_" + std::to_string(env.global_step()));
      }

      if (done) {
        if (env.finished()) break;
        obs = env.reset(env_rng);
        ep.task_id = env.current_task();
        ep.visit_index = env.current_visit();
      } else {
        obs = std::move(r.observation);
      }
    }
  } catch (const NumericError& e) {
    res.failed = true;
    res.error = e.what();
  }

  res.summary = metrics::summarize(res.episodes);
  res.policy = agent.policy();
  res.critic = agent.critic();
  res.cost_critic = agent.cost_critic();
  res.memory = agent.memory();
  if (dir) {
    detail::save_agent(*dir, agent, "");
    std::ofstream status(*dir / "status");
    status << (res.failed ? "failed " + res.error : std::string("ok")) << '\n';
  }
  return res;
}

inline std::string summary_csv(const ExperimentConfig& cfg, const std::vector<SeedResult>& results) {
  std::ostringstream o;
  o << kSummaryHeader << '\n';
  for (const auto& r : results) write_summary_rows(o, cfg.algorithm_name(), r.seed, r.summary, r.failed);
  return o.str();
}

/// Runs every seed and writes the experiment directory:
///   config.ini, summary.csv, seed_<n>/{episodes.csv, diagnostics.csv, status, *.ckpt}
inline std::vector<SeedResult> run(const ExperimentConfig& cfg, const RunHooks& hooks = {}) {
  cfg.validate();
  const std::filesystem::path out(cfg.output);
  std::filesystem::create_directories(out);
  {
    std::ofstream c(out / "config.ini");
    if (!c) throw StateError("cannot write into " + out.string());
    c << resolved_config_text(cfg);
  }
  std::vector<SeedResult> results;
  for (const RunSeed s : cfg.seeds) {
    results.push_back(run_seed(cfg, s, hooks, out / ("seed_" + std::to_string(s.value))));
  }
  std::ofstream summary(out / "summary.csv");
  summary << summary_csv(cfg, results);
  return results;
}

}  // namespace lifeline::harness
