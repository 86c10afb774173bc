#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "lifeline/envs/chain.hpp"
#include "lifeline/envs/runner.hpp"
#include "lifeline/envs/task_sequence.hpp"

using namespace lifeline;
using namespace lifeline::envs;

namespace {

RunnerParams hand_params() {
  RunnerParams p;
  p.gain = 1.0;
  p.drag = 0.1;
  p.dt = 0.1;
  p.action_penalty = 0.1;
  return p;
}

}  // namespace

TEST(Runner, HandEvaluatedStepFromRest) {
  const RunnerOutcome o = runner_step(hand_params(), {0.0, 0.0}, 1.0);
  EXPECT_DOUBLE_EQ(o.next.v, 0.1);
  EXPECT_DOUBLE_EQ(o.next.x, 0.01);
  EXPECT_NEAR(o.reward, 0.0, 1e-15);
  EXPECT_EQ(o.cost, 0.0);
}

TEST(Runner, RestIsAFixedPoint) {
  const RunnerOutcome o = runner_step(hand_params(), {3.0, 0.0}, 0.0);
  EXPECT_EQ(o.next.v, 0.0);
  EXPECT_EQ(o.next.x, 3.0);
  EXPECT_EQ(o.reward, 0.0);
  EXPECT_EQ(o.cost, 0.0);
}

TEST(Runner, CostIsIndicatorOfVelocityLimit) {
  RunnerParams p = hand_params();
  p.v_limit = 0.05;
  EXPECT_EQ(runner_step(p, {0.0, 0.0}, 1.0).cost, 1.0);
}

TEST(Runner, ActionsAreClippedToUnitBox) {
  const RunnerParams p = hand_params();
  const RunnerOutcome big = runner_step(p, {0.0, 0.2}, 7.5);
  const RunnerOutcome one = runner_step(p, {0.0, 0.2}, 1.0);
  EXPECT_EQ(big.next.v, one.next.v);
  EXPECT_EQ(big.reward, one.reward);
  EXPECT_EQ(runner_step(p, {0.0, 0.2}, -4.0).next.v, runner_step(p, {0.0, 0.2}, -1.0).next.v);
}

TEST(Runner, NonFiniteInputsAreRejected) {
  const RunnerParams p = hand_params();
  EXPECT_THROW(runner_step(p, {0.0, 0.0}, std::nan("")), ContractViolation);
  EXPECT_THROW(runner_step(p, {INFINITY, 0.0}, 0.5), ContractViolation);
}

TEST(Runner, InvalidParamsAreConfigErrors) {
  RunnerParams p;
  p.gain = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = RunnerParams{};
  p.dt = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = RunnerParams{};
  p.drag = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

// Property: cost is always exactly 0 or 1.
TEST(Runner, CostIsBinaryOnRandomTrajectories) {
  Rng rng(9);
  RunnerEnv env(RunnerParams{});
  for (int ep = 0; ep < 20; ++ep) {
    env.reset(rng);
    for (;;) {
      const StepResult r = env.step(std::vector<double>{rng.uniform(-2.0, 2.0)}, rng);
      ASSERT_TRUE(r.cost == 0.0 || r.cost == 1.0);
      if (r.truncated) break;
    }
  }
}

TEST(Runner, DeterministicWithoutObservationNoise) {
  RunnerEnv a(RunnerParams{});
  RunnerEnv b(RunnerParams{});
  Rng ra(1);
  Rng rb(2);
  a.reset(ra);
  b.reset(rb);
  for (int t = 0; t < 50; ++t) {
    const double act = std::sin(0.3 * t);
    const StepResult x = a.step(std::vector<double>{act}, ra);
    const StepResult y = b.step(std::vector<double>{act}, rb);
    ASSERT_EQ(x.observation, y.observation);
    ASSERT_EQ(x.reward, y.reward);
  }
}

TEST(Runner, ObservationNoiseNeverTouchesState) {
  RunnerParams p;
  p.obs_noise_std = 0.3;
  RunnerEnv noisy(p);
  RunnerEnv clean(RunnerParams{});
  Rng r1(1);
  Rng r2(1);
  noisy.reset(r1);
  clean.reset(r2);
  for (int t = 0; t < 30; ++t) {
    noisy.step(std::vector<double>{0.5}, r1);
    clean.step(std::vector<double>{0.5}, r2);
    ASSERT_EQ(noisy.state().v, clean.state().v);
  }
}

TEST(RunnerTasks, NominalGainAndDistinctDamage) {
  const RunnerTaskSet set = runner_task_set();
  EXPECT_EQ(set.tasks.at("nominal").gain, 1.0);
  EXPECT_EQ(set.tasks.at("front").gain, 0.4);
  EXPECT_EQ(set.tasks.at("back").gain, 1.6);
  EXPECT_EQ(set.tasks.at("back").drag, 2.0 * set.tasks.at("nominal").drag);
  const auto& n = set.tasks.at("nominal");
  const auto& f = set.tasks.at("front");
  const auto& b = set.tasks.at("back");
  EXPECT_TRUE(n.gain != f.gain || n.drag != f.drag);
  EXPECT_TRUE(n.gain != b.gain || n.drag != b.drag);
  EXPECT_TRUE(f.gain != b.gain || f.drag != b.drag);
}

TEST(RunnerTasks, LimbSensorsTellTasksApart) {
  const RunnerTaskSet set = runner_task_set();
  const auto first_obs = [&](const char* id) {
    RunnerEnv env(set.tasks.at(id));
    Rng r(3);
    return env.reset(r);
  };
  const Vector n = first_obs("nominal");
  const Vector f = first_obs("front");
  const Vector b = first_obs("back");
  ASSERT_EQ(n.size(), 3u);
  EXPECT_EQ(n[1], 1.0);
  EXPECT_EQ(n[2], 1.0);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 1.0);
  EXPECT_EQ(b[1], 1.0);
  EXPECT_EQ(b[2], 0.0);
}

TEST(RunnerTasks, EightEntryCycle) {
  const RunnerTaskSet set = runner_task_set();
  ASSERT_EQ(set.schedule.size(), 8u);
  const std::vector<std::string> expected{"nominal", "back", "nominal", "front", "back", "nominal", "front", "nominal"};
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(set.schedule.entries()[k].task_id, expected[k]);
    EXPECT_EQ(set.schedule.entries()[k].steps, 50'000);
  }
}

TEST(Chain, StepFromThreeReachesGoal) {
  Rng rng(1);
  const ChainOutcome o = chain_step(constrained_chain(), 3, 0, rng);
  EXPECT_EQ(o.next_state, 4u);
  EXPECT_TRUE(o.terminated);
  EXPECT_EQ(o.reward, 1.0);
}

TEST(Chain, DeterministicRowAlwaysLandsOnItsState) {
  ChainSpec s = constrained_chain();
  std::fill(s.p.begin() + 0, s.p.begin() + 5, 0.0);
  s.p[0] = 1.0;  // (s=0, a=0) -> 0
  Rng rng(4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(chain_step(s, 0, 0, rng).next_state, 0u);
}

TEST(Chain, EnteringHazardEmitsCost) {
  Rng rng(1);
  const ChainOutcome o = chain_step(constrained_chain(), 0, 1, rng);
  EXPECT_EQ(o.next_state, 2u);
  EXPECT_EQ(o.cost, 1.0);
}

TEST(Chain, OutOfRangeIndicesThrow) {
  Rng rng(1);
  EXPECT_THROW(chain_step(constrained_chain(), 5, 0, rng), RangeError);
  EXPECT_THROW(chain_step(constrained_chain(), 0, 2, rng), RangeError);
}

TEST(Chain, ValidationCatchesBadTables) {
  ChainSpec s = constrained_chain();
  s.p[0] = 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = constrained_chain();
  s.c[3] = -1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = constrained_chain();
  s.action_order = {0, 0};
  EXPECT_THROW(s.validate(), ConfigError);
}

// Monte-Carlo frequencies of a stochastic row match its probabilities.
TEST(Chain, SamplingMatchesTransitionRow) {
  ChainSpec s = constrained_chain();
  double* row = &s.p[(1 * 2 + 0) * 5];
  std::fill(row, row + 5, 0.0);
  row[0] = 0.2;
  row[2] = 0.5;
  row[3] = 0.3;
  s.validate();
  Rng rng(12);
  const int n = 100000;
  std::vector<int> count(5, 0);
  for (int i = 0; i < n; ++i) ++count[chain_step(s, 1, 0, rng).next_state];
  for (int k = 0; k < 5; ++k) {
    const double p = row[k];
    EXPECT_NEAR(count[k] / static_cast<double>(n), p, 5 * std::sqrt(p * (1 - p) / n) + 1e-12);
  }
}

TEST(Chain, ActionBinsCoverTheLine) {
  EXPECT_EQ(discretize_action(-5.0, 3), 0u);
  EXPECT_EQ(discretize_action(-0.5, 3), 0u);
  EXPECT_EQ(discretize_action(0.0, 3), 1u);
  EXPECT_EQ(discretize_action(0.5, 3), 2u);
  EXPECT_EQ(discretize_action(9.0, 3), 2u);
  EXPECT_EQ(discretize_action(-1e-9, 2), 0u);
  EXPECT_EQ(discretize_action(0.0, 2), 1u);
}

TEST(Chain, BinProbabilitiesMatchSampledGaussian) {
  for (const std::size_t n : {2u, 3u, 5u}) {
    const Vector p = action_bin_probabilities(0.3, 0.7, n);
    double sum = 0.0;
    for (const double q : p) sum += q;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    Rng rng(n);
    const int m = 100000;
    std::vector<int> count(n, 0);
    for (int i = 0; i < m; ++i) ++count[discretize_action(rng.normal(0.3, 0.7), n)];
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_NEAR(count[k] / static_cast<double>(m), p[k], 5 * std::sqrt(p[k] * (1 - p[k]) / m) + 1e-12);
    }
  }
}

TEST(Chain, TaskBReversesActionMeaning) {
  const ChainTaskSet set = chain_task_set();
  const ChainSpec& a = set.tasks.at("A");
  const ChainSpec& b = set.tasks.at("B");
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t s2 = 0; s2 < 5; ++s2) {
      EXPECT_EQ(a.prob(s, 0, s2), b.prob(s, 1, s2));
      EXPECT_EQ(a.prob(s, 1, s2), b.prob(s, 0, s2));
    }
  }
  ASSERT_EQ(set.schedule.size(), 6u);
  EXPECT_EQ(set.schedule.entries()[1].task_id, "B");
}

TEST(Chain, TextRoundTrip) {
  ChainSpec s = chain_task_set().tasks.at("B");
  s.gamma = 0.8;
  std::stringstream io;
  write_chain_spec(io, s);
  const ChainSpec back = parse_chain_spec(io);
  EXPECT_EQ(back.p, s.p);
  EXPECT_EQ(back.r, s.r);
  EXPECT_EQ(back.c, s.c);
  EXPECT_EQ(back.gamma, s.gamma);
  EXPECT_EQ(back.action_order, s.action_order);
  EXPECT_EQ(back.max_episode_len, s.max_episode_len);
}

TEST(Chain, FixtureFileMatchesBuiltIn) {
  const ChainSpec f = load_chain_spec(std::string(LIFELINE_TEST_DATA) + "/constrained_chain.txt");
  const ChainSpec s = constrained_chain();
  EXPECT_EQ(f.p, s.p);
  EXPECT_EQ(f.r, s.r);
  EXPECT_EQ(f.c, s.c);
}

TEST(Chain, ParserRejectsMalformedInput) {
  std::istringstream missing_rows("n_states 2\nn_actions 1\ngoal 1\nstart 0\ngamma 0.5\n0 0 0 1 0 0\n");
  EXPECT_THROW(parse_chain_spec(missing_rows), ConfigError);
  std::istringstream unknown("n_states 1\nfoo 3\n");
  EXPECT_THROW(parse_chain_spec(unknown), ConfigError);
  std::istringstream bad_sum("n_states 1\nn_actions 1\ngoal 0\nstart 0\ngamma 0.5\n0 0 0.9 0 0\n");
  EXPECT_THROW(parse_chain_spec(bad_sum), ConfigError);
}

TEST(ChainEnv, SuccessAndTruncation) {
  ChainEnv env(constrained_chain());
  Rng rng(1);
  env.reset(rng);
  StepResult r = env.step(std::vector<double>{0.5}, rng);  // dash to 2
  EXPECT_EQ(r.cost, 1.0);
  r = env.step(std::vector<double>{0.5}, rng);  // dash to goal
  EXPECT_TRUE(r.terminated);
  EXPECT_TRUE(r.success);
  EXPECT_FALSE(r.truncated);

  ChainSpec stuck = constrained_chain();
  stuck.max_episode_len = 3;
  for (std::size_t a = 0; a < 2; ++a) {
    std::fill_n(stuck.p.begin() + static_cast<std::ptrdiff_t>(a * 5), 5, 0.0);
    stuck.p[a * 5] = 1.0;
  }
  ChainEnv e2(stuck);
  e2.reset(rng);
  e2.step(std::vector<double>{0.5}, rng);
  e2.step(std::vector<double>{0.5}, rng);
  r = e2.step(std::vector<double>{0.5}, rng);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.success);
}

TEST(TaskSequence, SingleTaskHasNoLaterBoundary) {
  RunnerParams p;
  p.episode_len = 1000;
  auto fam = std::make_shared<RunnerFamily>(std::map<std::string, RunnerParams>{{"nominal", p}});
  TaskSequenceEnv env(fam, TaskSchedule({{"nominal", 100}}));
  Rng rng(1);
  env.reset(rng);
  int boundaries = 0;
  for (int t = 0; t < 100; ++t) {
    boundaries += env.is_boundary();
    env.step(std::vector<double>{0.1}, rng);
  }
  EXPECT_EQ(boundaries, 1);
  EXPECT_TRUE(env.finished());
}

TEST(TaskSequence, EightEntryRunnerScheduleSignalsEightBoundaries) {
  const RunnerTaskSet set = runner_task_set(RunnerParams{}, 300);
  auto fam = std::make_shared<RunnerFamily>(set.tasks);
  TaskSequenceEnv env(fam, set.schedule);
  Rng rng(2);
  env.reset(rng);
  int boundaries = 0;
  int ended = 0;
  std::vector<std::string> seen;
  while (!env.finished()) {
    if (env.is_boundary()) {
      ++boundaries;
      seen.push_back(env.current_task());
    }
    const StepResult r = env.step(std::vector<double>{0.3}, rng);
    ended += env.entry_just_ended();
    if ((r.terminated || r.truncated) && !env.finished()) env.reset(rng);
  }
  EXPECT_EQ(boundaries, 8);
  EXPECT_EQ(ended, 8);
  std::vector<std::string> expected;
  for (const auto& e : set.schedule.entries()) expected.push_back(e.task_id);
  EXPECT_EQ(seen, expected);
}

TEST(TaskSequence, BoundaryTruncatesActiveEpisode) {
  RunnerParams p;
  p.episode_len = 1000;
  const RunnerTaskSet set = runner_task_set(p, 250);
  TaskSequenceEnv env(std::make_shared<RunnerFamily>(set.tasks), set.schedule);
  Rng rng(3);
  env.reset(rng);
  for (int t = 0; t < 249; ++t) ASSERT_FALSE(env.step(std::vector<double>{0.2}, rng).truncated);
  const StepResult r = env.step(std::vector<double>{0.2}, rng);
  EXPECT_TRUE(r.truncated);
  EXPECT_TRUE(env.entry_just_ended());
  EXPECT_EQ(env.current_task(), "back");
  EXPECT_THROW(env.step(std::vector<double>{0.2}, rng), StateError);
  env.reset(rng);
  EXPECT_FALSE(env.entry_just_ended());
}

TEST(TaskSequence, DynamicsAreStationaryWithinAnEntry) {
  const RunnerTaskSet set = runner_task_set(RunnerParams{}, 1000);
  TaskSequenceEnv env(std::make_shared<RunnerFamily>(set.tasks), set.schedule);
  Rng rng(3);
  std::vector<Vector> first;
  env.reset(rng);
  for (int t = 0; t < 20; ++t) first.push_back(env.step(std::vector<double>{0.7}, rng).observation);
  env.reset(rng);
  for (int t = 0; t < 20; ++t) ASSERT_EQ(env.step(std::vector<double>{0.7}, rng).observation, first[t]);
}

TEST(TaskSequence, UnknownTaskIsConfigError) {
  auto fam = std::make_shared<RunnerFamily>(runner_task_set().tasks);
  EXPECT_THROW(TaskSequenceEnv(fam, TaskSchedule({{"middle", 10}})), ConfigError);
}
