#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lifeline/continual.hpp"
#include "lifeline/envs/chain.hpp"
#include "lifeline/envs/runner.hpp"
#include "lifeline/ppo.hpp"
#include "lifeline/safety.hpp"

namespace lifeline::harness {

enum class Algorithm { ppo, ppo_lag, cppo_pid, ppo_ewc, safe_ewc, cf_ewc, replay };

inline const std::vector<std::pair<Algorithm, std::string>>& algorithm_names() {
  static const std::vector<std::pair<Algorithm, std::string>> names = {
      {Algorithm::ppo, "ppo"},         {Algorithm::ppo_lag, "ppo_lag"}, {Algorithm::cppo_pid, "cppo_pid"},
      {Algorithm::ppo_ewc, "ppo_ewc"}, {Algorithm::safe_ewc, "safe_ewc"}, {Algorithm::cf_ewc, "cf_ewc"},
      {Algorithm::replay, "replay"}};
  return names;
}

inline std::string to_string(Algorithm a) {
  for (const auto& [alg, name] : algorithm_names()) {
    if (alg == a) return name;
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (const auto& [alg, name] : algorithm_names()) {
    if (name == s) return alg;
  }
  throw ConfigError("unknown algorithm '" + s + "' (expected ppo, ppo_lag, cppo_pid, ppo_ewc, safe_ewc, cf_ewc, replay)");
}

enum class EnvironmentKind { runner, chain };

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::ppo;
  EnvironmentKind environment = EnvironmentKind::runner;
  std::vector<RunSeed> seeds = {{1}};
  std::string output = "runs";
  std::int64_t checkpoint_interval = 0;  // steps between policy snapshots; 0 keeps only the final one

  std::int64_t steps_per_task = 50'000;
  std::vector<std::string> tasks;  // empty: the environment's default cycle

  PpoConfig ppo;
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 2;
  double initial_log_std = -0.69314718055994529;  // log 0.5

  ShapingConfig shaping;
  ConstraintController constraint;
  double lambda_ewc = 12.926;
  std::size_t fisher_samples = 1000;
  std::size_t replay_capacity = 100'000;

  envs::RunnerParams runner;
  std::string chain_spec_path;  // empty: the built-in constrained chain
  envs::ChainSpec chain = envs::constrained_chain();
  std::size_t chain_entries = 6;

  [[nodiscard]] TaskSchedule schedule() const {
    std::vector<std::string> ids = tasks;
    if (ids.empty()) {
      if (environment == EnvironmentKind::runner) {
        const auto set = envs::runner_task_set(runner, steps_per_task);
        for (const auto& e : set.schedule.entries()) ids.push_back(e.task_id);
      } else {
        const auto set = envs::chain_task_set(chain, steps_per_task, chain_entries);
        for (const auto& e : set.schedule.entries()) ids.push_back(e.task_id);
      }
    }
    std::vector<ScheduleEntry> entries;
    for (auto& id : ids) entries.push_back({id, steps_per_task});
    return TaskSchedule(std::move(entries));
  }

  [[nodiscard]] std::shared_ptr<const EnvironmentFamily> family() const {
    if (environment == EnvironmentKind::runner) {
      return std::make_shared<envs::RunnerFamily>(envs::runner_task_set(runner, steps_per_task).tasks);
    }
    return std::make_shared<envs::ChainFamily>(envs::chain_task_set(chain, steps_per_task, chain_entries).tasks);
  }

  void validate() const {
    ppo.validate();
    runner.validate();
    chain.validate();
    if (seeds.empty()) throw ConfigError("experiment: at least one seed is required");
    if (steps_per_task <= 0) throw ConfigError("schedule: steps_per_task must be positive");
    if (checkpoint_interval < 0) throw ConfigError("experiment: checkpoint_interval must be >= 0");
    if (hidden_width == 0) throw ConfigError("network: hidden_width must be positive");
    if (!(shaping.beta >= 0.0 && std::isfinite(shaping.beta))) throw ConfigError("shaping: beta must be >= 0");
    if (!(constraint.cost_limit >= 0.0)) throw ConfigError("constraint: cost_limit must be >= 0");
    if (!(constraint.lr_lambda > 0.0)) throw ConfigError("constraint: lr_lambda must be > 0");
    if (constraint.kp < 0.0 || constraint.ki < 0.0 || constraint.kd < 0.0) {
      throw ConfigError("constraint: PID gains must be >= 0");
    }
    if (!(lambda_ewc >= 0.0)) throw ConfigError("ewc: lambda must be >= 0");
    if (fisher_samples == 0) throw ConfigError("ewc: fisher_samples must be positive");
    if (replay_capacity == 0) throw ConfigError("replay: capacity must be positive");
    if (ppo.update_interval < 2 && algorithm == Algorithm::replay) {
      throw ConfigError("replay: update_interval must be at least 2");
    }
    const TaskSchedule sched = schedule();
    const auto fam = family();
    for (const auto& e : sched.entries()) {
      if (!fam->has_task(e.task_id)) throw ConfigError("schedule: unknown task '" + e.task_id + "'");
    }
  }

  [[nodiscard]] std::string algorithm_name() const { return to_string(algorithm); }
};

/// Built-in defaults for an environment: update interval, discount and cost
/// limit differ between the runner and the chain.
inline ExperimentConfig default_config(EnvironmentKind env) {
  ExperimentConfig c;
  c.environment = env;
  if (env == EnvironmentKind::runner) {
    c.steps_per_task = 50'000;
    c.ppo.update_interval = 2048;
    c.ppo.gamma = 0.99;
    c.constraint.cost_limit = 25.0 * static_cast<double>(c.runner.episode_len) / 1000.0;
  } else {
    c.steps_per_task = 5'000;
    c.ppo.update_interval = 512;
    c.ppo.gamma = c.chain.gamma;
    c.constraint.cost_limit = 0.5;
    // Costs on the chain are O(1) per episode; a stronger integral term lets
    // the PID multiplier settle within the short budget.
    c.constraint.ki = 0.05;
  }
  return c;
}

// ---------------------------------------------------------------------------
// INI reading / writing

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"experiment", {"algorithm", "environment", "seeds", "output", "checkpoint_interval"}},
      {"schedule", {"steps_per_task", "tasks", "chain_entries"}},
      {"ppo",
       {"gamma", "lambda_gae", "clip", "value_coeff", "entropy_coeff", "lr_actor", "lr_critic", "epochs",
        "minibatch_size", "update_interval", "target_kl"}},
      {"network", {"hidden_width", "hidden_layers", "initial_log_std"}},
      {"shaping", {"beta"}},
      {"constraint", {"cost_limit", "cost_limit_scale", "lr_lambda", "kp", "ki", "kd"}},
      {"ewc", {"lambda", "fisher_samples"}},
      {"replay", {"capacity"}},
      {"runner", {"drag", "dt", "v_limit", "action_penalty", "episode_len", "obs_noise_std"}},
      {"chain", {"spec", "gamma", "max_steps"}},
  };
  return s;
}

template <typename T>
T parse_value(const std::string& section, const std::string& key, const std::string& raw) {
  std::istringstream in(raw);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw ConfigError("config: [" + section + "] " + key + " = '" + raw + "' is not a valid value");
  }
  return v;
}

inline std::vector<std::string> split_words(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : raw) {
    if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string fmt(double v) {
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

}  // namespace detail

/// Dotted-key overrides ("ppo.epochs" -> "4") applied on top of the file.
using Overrides = std::vector<std::pair<std::string, std::string>>;

inline ExperimentConfig parse_config(const boost::property_tree::ptree& tree, const Overrides& overrides = {}) {
  using detail::parse_value;
  boost::property_tree::ptree pt = tree;
  for (const auto& [dotted, value] : overrides) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) throw ConfigError("override '" + dotted + "' must look like section.key");
    pt.put(boost::property_tree::ptree::path_type(dotted, '.'), value);
  }
  const auto& schema = detail::schema();
  for (const auto& [section, child] : pt) {
    const auto it = schema.find(section);
    if (child.empty() || it == schema.end()) {
      throw ConfigError(child.empty() ? "config: key '" + section + "' outside any section"
                                      : "config: unknown section [" + section + "]");
    }
    for (const auto& [key, leaf] : child) {
      if (!it->second.contains(key)) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }
  const auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    if (const auto s = pt.get_child_optional(section)) {
      if (const auto v = s->get_optional<std::string>(key)) return *v;
    }
    return std::nullopt;
  };

  EnvironmentKind env = EnvironmentKind::runner;
  if (const auto v = get("experiment", "environment")) {
    if (*v == "runner") {
      env = EnvironmentKind::runner;
    } else if (*v == "chain") {
      env = EnvironmentKind::chain;
    } else {
      throw ConfigError("config: environment must be 'runner' or 'chain', got '" + *v + "'");
    }
  }
  ExperimentConfig c = default_config(env);

  if (const auto v = get("chain", "spec"); v && !v->empty()) {
    c.chain_spec_path = *v;
    c.chain = envs::load_chain_spec(*v);
  }
  if (const auto v = get("chain", "gamma")) c.chain.gamma = parse_value<double>("chain", "gamma", *v);
  if (const auto v = get("chain", "max_steps")) c.chain.max_episode_len = parse_value<std::int64_t>("chain", "max_steps", *v);
  if (env == EnvironmentKind::chain) c.ppo.gamma = c.chain.gamma;

  if (const auto v = get("experiment", "algorithm")) c.algorithm = parse_algorithm(*v);
  if (const auto v = get("experiment", "seeds")) {
    c.seeds.clear();
    for (const auto& w : detail::split_words(*v)) c.seeds.push_back({parse_value<std::uint64_t>("experiment", "seeds", w)});
  }
  if (const auto v = get("experiment", "output")) c.output = *v;
  if (const auto v = get("experiment", "checkpoint_interval")) {
    c.checkpoint_interval = parse_value<std::int64_t>("experiment", "checkpoint_interval", *v);
  }

  if (const auto v = get("schedule", "steps_per_task")) c.steps_per_task = parse_value<std::int64_t>("schedule", "steps_per_task", *v);
  if (const auto v = get("schedule", "tasks")) c.tasks = detail::split_words(*v);
  if (const auto v = get("schedule", "chain_entries")) c.chain_entries = parse_value<std::size_t>("schedule", "chain_entries", *v);

  const auto num = [&](const char* section, const char* key, auto& field) {
    if (const auto v = get(section, key)) field = parse_value<std::decay_t<decltype(field)>>(section, key, *v);
  };
  num("ppo", "gamma", c.ppo.gamma);
  num("ppo", "lambda_gae", c.ppo.lambda_gae);
  num("ppo", "clip", c.ppo.clip);
  num("ppo", "value_coeff", c.ppo.value_coeff);
  num("ppo", "entropy_coeff", c.ppo.entropy_coeff);
  num("ppo", "lr_actor", c.ppo.lr_actor);
  num("ppo", "lr_critic", c.ppo.lr_critic);
  num("ppo", "epochs", c.ppo.epochs);
  num("ppo", "minibatch_size", c.ppo.minibatch_size);
  num("ppo", "update_interval", c.ppo.update_interval);
  num("ppo", "target_kl", c.ppo.target_kl);
  num("network", "hidden_width", c.hidden_width);
  num("network", "hidden_layers", c.hidden_layers);
  num("network", "initial_log_std", c.initial_log_std);
  num("shaping", "beta", c.shaping.beta);
  num("runner", "drag", c.runner.drag);
  num("runner", "dt", c.runner.dt);
  num("runner", "v_limit", c.runner.v_limit);
  num("runner", "action_penalty", c.runner.action_penalty);
  num("runner", "episode_len", c.runner.episode_len);
  num("runner", "obs_noise_std", c.runner.obs_noise_std);

  // The runner's limit is the benchmark episodic limit scaled to the episode
  // length unless given explicitly.
  double scale = static_cast<double>(c.runner.episode_len) / 1000.0;
  num("constraint", "cost_limit_scale", scale);
  if (env == EnvironmentKind::runner) c.constraint.cost_limit = 25.0 * scale;
  num("constraint", "cost_limit", c.constraint.cost_limit);
  num("constraint", "lr_lambda", c.constraint.lr_lambda);
  num("constraint", "kp", c.constraint.kp);
  num("constraint", "ki", c.constraint.ki);
  num("constraint", "kd", c.constraint.kd);
  c.constraint.mode = c.algorithm == Algorithm::cppo_pid ? MultiplierMode::pid : MultiplierMode::gradient;
  num("ewc", "lambda", c.lambda_ewc);
  num("ewc", "fisher_samples", c.fisher_samples);
  num("replay", "capacity", c.replay_capacity);

  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path, const Overrides& overrides = {}) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(path, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(pt, overrides);
}

inline ExperimentConfig parse_config_string(const std::string& text, const Overrides& overrides = {}) {
  boost::property_tree::ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(pt, overrides);
}

/// Every setting with defaults expanded, in a form parse_config reads back.
inline std::string resolved_config_text(const ExperimentConfig& c) {
  using detail::fmt;
  std::ostringstream o;
  o << "[experiment]\nalgorithm = " << c.algorithm_name()
    << "\nenvironment = " << (c.environment == EnvironmentKind::runner ? "runner" : "chain") << "\nseeds =";
  for (const auto& s : c.seeds) o << ' ' << s.value;
  o << "\noutput = " << c.output << "\ncheckpoint_interval = " << c.checkpoint_interval << "\n\n";
  o << "[schedule]\nsteps_per_task = " << c.steps_per_task << "\ntasks =";
  const TaskSchedule sched = c.schedule();
  for (const auto& e : sched.entries()) o << ' ' << e.task_id;
  o << "\nchain_entries = " << c.chain_entries << "\n\n";
  o << "[ppo]\ngamma = " << fmt(c.ppo.gamma) << "\nlambda_gae = " << fmt(c.ppo.lambda_gae) << "\nclip = " << fmt(c.ppo.clip)
    << "\nvalue_coeff = " << fmt(c.ppo.value_coeff) << "\nentropy_coeff = " << fmt(c.ppo.entropy_coeff)
    << "\nlr_actor = " << fmt(c.ppo.lr_actor) << "\nlr_critic = " << fmt(c.ppo.lr_critic) << "\nepochs = " << c.ppo.epochs
    << "\nminibatch_size = " << c.ppo.minibatch_size << "\nupdate_interval = " << c.ppo.update_interval
    << "\ntarget_kl = " << fmt(c.ppo.target_kl) << "\n\n";
  o << "[network]\nhidden_width = " << c.hidden_width << "\nhidden_layers = " << c.hidden_layers
    << "\ninitial_log_std = " << fmt(c.initial_log_std) << "\n\n";
  o << "[shaping]\nbeta = " << fmt(c.shaping.beta) << "\n\n";
  o << "[constraint]\ncost_limit = " << fmt(c.constraint.cost_limit) << "\nlr_lambda = " << fmt(c.constraint.lr_lambda)
    << "\nkp = " << fmt(c.constraint.kp) << "\nki = " << fmt(c.constraint.ki) << "\nkd = " << fmt(c.constraint.kd) << "\n\n";
  o << "[ewc]\nlambda = " << fmt(c.lambda_ewc) << "\nfisher_samples = " << c.fisher_samples << "\n\n";
  o << "[replay]\ncapacity = " << c.replay_capacity << "\n\n";
  o << "[runner]\ndrag = " << fmt(c.runner.drag) << "\ndt = " << fmt(c.runner.dt) << "\nv_limit = " << fmt(c.runner.v_limit)
    << "\naction_penalty = " << fmt(c.runner.action_penalty) << "\nepisode_len = " << c.runner.episode_len
    << "\nobs_noise_std = " << fmt(c.runner.obs_noise_std) << "\n\n";
  o << "[chain]\nspec = " << c.chain_spec_path << "\ngamma = " << fmt(c.chain.gamma)
    << "\nmax_steps = " << c.chain.max_episode_len << "\n";
  return o.str();
}

}  // namespace lifeline::harness
