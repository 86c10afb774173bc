#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "lifeline/lifeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeFailure = 2;
constexpr int kOracleViolation = 3;

using namespace lifeline;

int cmd_run(const std::string& path, const std::vector<std::uint64_t>& seeds, const std::int64_t steps,
            const std::string& out, const std::vector<std::string>& sets) {
  harness::Overrides ov;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    ov.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (!seeds.empty()) {
    std::string joined;
    for (const auto v : seeds) joined += std::to_string(v) + " ";
    ov.emplace_back("experiment.seeds", joined);
  }
  if (steps > 0) ov.emplace_back("schedule.steps_per_task", std::to_string(steps));
  if (!out.empty()) ov.emplace_back("experiment.output", out);
  const harness::ExperimentConfig cfg = harness::load_config(path, ov);

  std::cout << "running " << cfg.algorithm_name() << " on " << cfg.schedule().size() << " schedule entries, "
            << cfg.seeds.size() << " seed(s) -> " << cfg.output << "\n";
  const auto results = harness::run(cfg);
  bool all_failed = true;
  for (const auto& r : results) {
    const auto agg = metrics::aggregate_tasks(r.summary);
    std::cout << "seed " << r.seed.value << ": " << (r.failed ? "FAILED (" + r.error + ")" : std::string("ok"))
              << "  episodes=" << r.episodes.size() << "  final_reward=" << agg.final_reward
              << "  total_cost=" << agg.total_cost << "\n";
    all_failed = all_failed && r.failed;
  }
  return all_failed ? kRuntimeFailure : kOk;
}

int cmd_report(const std::string& dir) {
  const harness::Report rep = harness::build_report(dir);
  harness::print_report(std::cout, rep);
  harness::write_report_csv(std::filesystem::path(dir) / "report.csv", rep);
  return kOk;
}

int cmd_oracle_check(const std::string& spec_path, const std::string& ckpt, double cost_limit, double epsilon,
                     bool reversed) {
  const envs::ChainSpec spec = envs::load_chain_spec(spec_path);
  const GaussianPolicy policy = load_policy(ckpt);
  std::vector<oracle::TaskReference> tasks;
  tasks.push_back({"A", spec, oracle::value_iterate(spec, spec.gamma).values});
  if (reversed) {
    envs::ChainSpec b = envs::chain_task_set(spec, 1, 2).tasks.at("B");
    tasks.push_back({"B", b, oracle::value_iterate(b, b.gamma).values});
  }
  const oracle::TabularPolicy pi = oracle::from_gaussian(policy, spec);
  const oracle::ConstraintReport rep = oracle::check_constraints(tasks, pi, cost_limit, epsilon);
  oracle::print_report(std::cout, rep);
  std::cout << (rep.feasible() ? "feasible\n" : "VIOLATION\n");
  return rep.feasible() ? kOk : kOracleViolation;
}

int cmd_grad_check(std::size_t instances, std::uint64_t seed) {
  const auto res = harness::run_gradient_suite(instances, seed);
  harness::print_gradient_suite(std::cout, res);
  return res.passed() ? kOk : kRuntimeFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe continual reinforcement learning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::int64_t steps = 0;
  std::string out;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Train every seed of an experiment config");
  run->add_option("config", config_path, "INI experiment file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seeds, "Seed(s), replacing the config's list");
  run->add_option("--steps-per-task", steps, "Steps per schedule entry")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Output directory");
  run->add_option("--set", sets, "Extra override, section.key=value");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate finished runs below a directory");
  report->add_option("dir", report_dir, "Directory holding experiment outputs")->required();

  std::string spec_path;
  std::string ckpt_path;
  double cost_limit = 0.5;
  double epsilon = 0.05;
  bool reversed = false;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Tabular feasibility check of a chain policy");
  oracle_cmd->add_option("chain-spec", spec_path, "Chain table file")->required()->check(CLI::ExistingFile);
  oracle_cmd->add_option("policy-ckpt", ckpt_path, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  oracle_cmd->add_option("--cost-limit", cost_limit, "Cost limit d")->capture_default_str();
  oracle_cmd->add_option("--epsilon", epsilon, "Tolerance on V* - V")->capture_default_str();
  oracle_cmd->add_flag("--reversed", reversed, "Also check the action-reversed task");

  std::size_t instances = 50;
  std::uint64_t gc_seed = 7;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of every analytic gradient");
  grad->add_option("--instances", instances, "Random networks to check")->capture_default_str();
  grad->add_option("--seed", gc_seed, "Seed for the random instances")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, seeds, steps, out, sets);
    if (*report) return cmd_report(report_dir);
    if (*oracle_cmd) return cmd_oracle_check(spec_path, ckpt_path, cost_limit, epsilon, reversed);
    if (*grad) return cmd_grad_check(instances, gc_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}
