#include <gtest/gtest.h>

#include <cmath>

#include "lifeline/oracle.hpp"

using namespace lifeline;
using namespace lifeline::envs;
using namespace lifeline::oracle;

namespace {

ChainSpec single_state(double reward, double cost) {
  ChainSpec s;
  s.n_states = 1;
  s.n_actions = 1;
  s.p = {1.0};
  s.r = {reward};
  s.c = {cost};
  return s;
}

ChainSpec two_state_cycle() {
  ChainSpec s;
  s.n_states = 2;
  s.n_actions = 1;
  s.p = {0.0, 1.0, 1.0, 0.0};
  s.r = {1.0, 0.0};
  s.c = {0.0, 1.0};
  return s;
}

ChainSpec random_mdp(Rng& rng, std::size_t ns, std::size_t na) {
  ChainSpec s;
  s.n_states = ns;
  s.n_actions = na;
  for (std::size_t k = 0; k < ns * na; ++k) {
    double sum = 0.0;
    std::vector<double> row(ns);
    for (double& q : row) sum += (q = rng.uniform() < 0.5 ? rng.uniform() : 0.0);
    if (sum == 0.0) row[rng.below(ns)] = sum = 1.0;
    for (double& q : row) s.p.push_back(q / sum);
    s.r.push_back(rng.normal());
    s.c.push_back(rng.uniform() < 0.3 ? 1.0 : 0.0);
  }
  s.validate();
  return s;
}

TabularPolicy random_policy(Rng& rng, std::size_t ns, std::size_t na) {
  TabularPolicy pi{ns, na, {}};
  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<double> row(na);
    double sum = 0.0;
    for (double& q : row) sum += (q = rng.uniform() + 0.05);
    for (double& q : row) pi.probs.push_back(q / sum);
  }
  return pi;
}

// Independent oracle: plain Bellman sweeps to a fixed point.
Vector iterative_evaluate(const ChainSpec& spec, const TabularPolicy& pi, Signal sig, double gamma) {
  Vector v(spec.n_states, 0.0);
  for (int it = 0; it < 20000; ++it) {
    Vector next(spec.n_states, 0.0);
    for (std::size_t s = 0; s < spec.n_states; ++s) {
      for (std::size_t a = 0; a < spec.n_actions; ++a) {
        double ev = 0.0;
        for (std::size_t s2 = 0; s2 < spec.n_states; ++s2) ev += spec.prob(s, a, s2) * v[s2];
        next[s] += pi.at(s, a) *
                   (sig.reward_weight * spec.reward(s, a) + sig.cost_weight * spec.cost(s, a) + gamma * ev);
      }
    }
    v = next;
  }
  return v;
}

std::size_t draw(Rng& rng, std::span<const double> probs) {
  double u = rng.uniform();
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    if (u < probs[k]) return k;
    u -= probs[k];
  }
  return probs.size() - 1;
}

}  // namespace

TEST(PolicyEvaluate, SingleStateGeometricSeries) {
  const ChainSpec s = single_state(1.0, 0.0);
  const Vector v = policy_evaluate(s, TabularPolicy::uniform(1, 1), Signal::reward(), 0.5);
  EXPECT_DOUBLE_EQ(v[0], 2.0);
}

TEST(PolicyEvaluate, TwoStateCycle) {
  const ChainSpec s = two_state_cycle();
  const Vector v = policy_evaluate(s, TabularPolicy::uniform(2, 1), Signal::reward(), 0.5);
  EXPECT_NEAR(v[0], 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(v[1], 2.0 / 3.0, 1e-14);
}

TEST(PolicyEvaluate, ZeroCostChainHasZeroCostValue) {
  ChainSpec s = constrained_chain();
  std::fill(s.c.begin(), s.c.end(), 0.0);
  const Vector vc = policy_evaluate(s, TabularPolicy::uniform(5, 2), Signal::cost(), 0.9);
  for (const double x : vc) EXPECT_EQ(x, 0.0);
}

TEST(PolicyEvaluate, GammaBoundsAreContractViolations) {
  const ChainSpec s = single_state(1.0, 0.0);
  EXPECT_THROW(policy_evaluate(s, TabularPolicy::uniform(1, 1), Signal::reward(), 1.0), ContractViolation);
  EXPECT_THROW(policy_evaluate(s, TabularPolicy::uniform(2, 1), Signal::reward(), 0.5), ContractViolation);
}

TEST(PolicyEvaluate, MatchesIndependentIterativeOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t ns = 2 + rng.below(8);
    const std::size_t na = 1 + rng.below(4);
    const ChainSpec spec = random_mdp(rng, ns, na);
    const TabularPolicy pi = random_policy(rng, ns, na);
    const double gamma = rng.uniform(0.0, 0.95);
    for (const Signal sig : {Signal::reward(), Signal::cost(), Signal::shaped(5.0)}) {
      const Vector exact = policy_evaluate(spec, pi, sig, gamma);
      const Vector iter = iterative_evaluate(spec, pi, sig, gamma);
      for (std::size_t s = 0; s < ns; ++s) ASSERT_NEAR(exact[s], iter[s], 1e-9);
    }
  }
}

TEST(PolicyEvaluate, ShapedValueIsLinearInTheSignals) {
  Rng rng(18);
  const ChainSpec spec = random_mdp(rng, 6, 3);
  const TabularPolicy pi = random_policy(rng, 6, 3);
  const Vector v = policy_evaluate(spec, pi, Signal::reward(), 0.9);
  const Vector vc = policy_evaluate(spec, pi, Signal::cost(), 0.9);
  const Vector vs = policy_evaluate(spec, pi, Signal::shaped(5.0), 0.9);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_NEAR(vs[s], v[s] - 5.0 * vc[s], 1e-9);
}

TEST(PolicyEvaluate, MonteCarloAgreesWithinThreeStandardErrors) {
  Rng rng(19);
  const ChainSpec spec = random_mdp(rng, 5, 2);
  const TabularPolicy pi = random_policy(rng, 5, 2);
  const double gamma = 0.8;
  const Vector exact = policy_evaluate(spec, pi, Signal::reward(), gamma);
  const int n = 4000;
  double sum = 0, sq = 0;
  for (int ep = 0; ep < n; ++ep) {
    std::size_t s = 0;
    double g = 0.0, disc = 1.0;
    for (int t = 0; t < 120; ++t) {  // 0.8^120 ~ 2e-12
      const std::size_t a = draw(rng, std::span<const double>(pi.probs).subspan(s * 2, 2));
      g += disc * spec.reward(s, a);
      disc *= gamma;
      s = draw(rng, std::span<const double>(spec.p).subspan((s * 2 + a) * 5, 5));
    }
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(mean, exact[0], 3 * se);
}

TEST(ValueIterate, ConstrainedChainOptimum) {
  const ValueIterationResult vi = value_iterate(constrained_chain(), 0.9);
  const Vector want{0.9, 0.9, 1.0, 1.0, 0.0};
  for (std::size_t s = 0; s < 5; ++s) EXPECT_NEAR(vi.values[s], want[s], 1e-9);
  EXPECT_EQ(vi.greedy_actions[0], 1u);  // dash through the hazard
}

TEST(ValueIterate, MyopicLimit) {
  Rng rng(20);
  const ChainSpec spec = random_mdp(rng, 4, 3);
  const ValueIterationResult vi = value_iterate(spec, 0.0);
  for (std::size_t s = 0; s < 4; ++s) {
    double best = -1e300;
    for (std::size_t a = 0; a < 3; ++a) best = std::max(best, spec.reward(s, a));
    EXPECT_NEAR(vi.values[s], best, 1e-12);
  }
}

TEST(ValueIterate, FixedPointAndGreedyConsistency) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const ChainSpec spec = random_mdp(rng, 7, 3);
    const ValueIterationResult vi = value_iterate(spec, 0.9);
    EXPECT_LT(bellman_residual(spec, vi.values, 0.9), 1e-8);
    const Vector vg = policy_evaluate(spec, vi.greedy, Signal::reward(), 0.9);
    for (std::size_t s = 0; s < 7; ++s) EXPECT_NEAR(vg[s], vi.values[s], 1e-8);
  }
}

TEST(Constraints, GreedyIsUnsafeAndDetourIsFeasible) {
  const ChainSpec chain = constrained_chain();
  const ValueIterationResult vi = value_iterate(chain, chain.gamma);
  const std::vector<TaskReference> refs{{"A", chain, vi.values}};

  const ConstraintReport greedy = check_constraints(refs, vi.greedy, 0.5, 0.0);
  EXPECT_FALSE(greedy.feasible());
  EXPECT_TRUE(greedy.rows[0].retains);
  EXPECT_FALSE(greedy.rows[0].safe);
  EXPECT_DOUBLE_EQ(greedy.rows[0].cost_value, 1.0);

  // step, dash, -, step, -: avoids cell 2 and loses one discount factor.
  const TabularPolicy detour = TabularPolicy::deterministic({0, 1, 1, 0, 0}, 2);
  const ConstraintReport ok = check_constraints(refs, detour, 0.5, 0.1);
  EXPECT_TRUE(ok.feasible());
  EXPECT_NEAR(ok.rows[0].value, 0.81, 1e-12);
  EXPECT_EQ(ok.rows[0].cost_value, 0.0);
  EXPECT_FALSE(check_constraints(refs, detour, 0.5, 0.05).feasible());
}

TEST(Constraints, EmptyReferenceIsConfigError) {
  EXPECT_THROW(check_constraints({}, TabularPolicy::uniform(5, 2), 0.5, 0.1), ConfigError);
}

TEST(FromGaussian, RowsAreBinProbabilities) {
  GaussianPolicy pi({5, 1}, std::log(0.3));
  pi.params()[5] = 0.8;  // output bias: mean action 0.8 everywhere
  const TabularPolicy t = from_gaussian(pi, constrained_chain());
  t.validate();
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_NEAR(t.at(s, 1), 0.5 * std::erfc(-0.8 / (0.3 * std::sqrt(2.0))), 1e-12);
  }
}
