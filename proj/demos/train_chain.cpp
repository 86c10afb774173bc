// Trains PPO and PPO-Lag on the constrained chain and prints the exact
// tabular value of each learned policy.
#include <iomanip>
#include <iostream>

#include "lifeline/lifeline.hpp"

int main(int argc, char** argv) {
  using namespace lifeline;
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 1;

  for (const auto* alg : {"ppo", "ppo_lag", "cppo_pid"}) {
    harness::ExperimentConfig cfg = harness::parse_config_string(
        std::string("[experiment]\nalgorithm = ") + alg +
        "\nenvironment = chain\n[schedule]\nsteps_per_task = 20000\ntasks = A\n[constraint]\ncost_limit = 0.5\n");
    const harness::SeedResult res = harness::run_seed(cfg, {seed});
    const oracle::TabularPolicy pi = oracle::from_gaussian(res.policy, cfg.chain);
    const Vector v = oracle::policy_evaluate(cfg.chain, pi, oracle::Signal::reward(), cfg.chain.gamma);
    const Vector vc = oracle::policy_evaluate(cfg.chain, pi, oracle::Signal::cost(), cfg.chain.gamma);
    std::cout << std::left << std::setw(10) << alg << std::fixed << std::setprecision(4)
              << "V(start)=" << v[cfg.chain.start_state] << "  V^C(start)=" << vc[cfg.chain.start_state]
              << "  limit=" << cfg.constraint.cost_limit << '\n';
  }
}
