#pragma once

#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lifeline/approximator.hpp"
#include "lifeline/ppo.hpp"

namespace lifeline {

// ---------------------------------------------------------------------------
// Elastic weight consolidation

struct EwcEntry {
  ParameterVector theta_star;
  ParameterVector fisher;
  std::string task_id;
};

struct EwcMemory {
  std::vector<EwcEntry> entries;
  double lambda = 12.926;
};

enum class FisherWeighting {
  plain,  // every sample weighs 1
  cost,   // sample n weighs 1 / (1 + c_n)
};

struct FisherSample {
  Vector state;
  Vector action;
  double cost = 0.0;
};

inline Vector fisher_weights(std::span<const FisherSample> rollout, FisherWeighting mode) {
  Vector w(rollout.size(), 1.0);
  if (mode == FisherWeighting::cost) {
    for (std::size_t n = 0; n < rollout.size(); ++n) {
      require(rollout[n].cost >= 0.0, "fisher_weights: negative cost");
      w[n] = 1.0 / (rollout[n].cost + 1.0);
    }
  }
  return w;
}

/// Diagonal Fisher: F_i = (1/N) sum_n w_n (d log pi(a_n|s_n) / d theta_i)^2.
inline Vector estimate_fisher(const GaussianPolicy& policy, std::span<const FisherSample> rollout,
                              std::span<const double> weights) {
  if (rollout.empty()) throw ContractViolation("estimate_fisher: empty rollout");
  require(weights.size() == rollout.size(), "estimate_fisher: one weight per sample required");
  Vector fisher(policy.param_count(), 0.0);
  Vector score(policy.param_count());
  MlpShape::Cache cache;
  for (std::size_t n = 0; n < rollout.size(); ++n) {
    std::fill(score.begin(), score.end(), 0.0);
    policy.accumulate_log_prob_grad(rollout[n].state, rollout[n].action, 1.0, score, cache);
    for (std::size_t i = 0; i < score.size(); ++i) fisher[i] += weights[n] * score[i] * score[i];
  }
  const double inv_n = 1.0 / static_cast<double>(rollout.size());
  for (double& f : fisher) f *= inv_n;
  return fisher;
}

/// sum over entries of sum_i (lambda/2) F_i (theta_i - theta*_i)^2, and its gradient.
inline LossAndGrad ewc_penalty(const EwcMemory& memory, std::span<const double> theta) {
  LossAndGrad out;
  out.grad.assign(theta.size(), 0.0);
  for (const auto& e : memory.entries) {
    if (e.theta_star.size() != theta.size() || e.fisher.size() != theta.size()) {
      throw ContractViolation("ewc_penalty: parameter length mismatch with stored entry '" + e.task_id + "'");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - e.theta_star[i];
      out.value += 0.5 * memory.lambda * e.fisher[i] * d * d;
      out.grad[i] += memory.lambda * e.fisher[i] * d;
    }
  }
  return out;
}

/// Hook form for ppo_update. Reads the memory at call time.
inline ActorPenalty make_ewc_penalty(const EwcMemory& memory) {
  return [&memory](const PenaltyContext& ctx) {
    if (memory.entries.empty()) return 0.0;
    const LossAndGrad p = ewc_penalty(memory, ctx.theta);
    for (std::size_t i = 0; i < p.grad.size(); ++i) ctx.grad_theta[i] += p.grad[i];
    return p.value;
  };
}

/// Runs the frozen policy for one episode (at most `max_samples` steps) in
/// `env`, which must carry the dynamics of the task being closed.
inline std::vector<FisherSample> collect_fisher_rollout(const GaussianPolicy& policy, Environment& env,
                                                        std::size_t max_samples, Rng& rng) {
  require(max_samples > 0, "collect_fisher_rollout: sample budget must be positive");
  std::vector<FisherSample> out;
  Vector obs = env.reset(rng);
  while (out.size() < max_samples) {
    const auto sample = policy.sample(obs, rng);
    StepResult r = env.step(sample.action, rng);
    out.push_back({std::move(obs), sample.action, r.cost});
    if (r.terminated || r.truncated) break;
    obs = std::move(r.observation);
  }
  return out;
}

/// Closes a task: anchors theta* at the current parameters and appends the
/// (weighted) Fisher estimated on one fresh episode of the ending task.
inline void finish_task(EwcMemory& memory, const GaussianPolicy& policy, Environment& env, std::size_t n_fisher,
                        Rng& rng, FisherWeighting weighting, const std::string& task_id) {
  const std::vector<FisherSample> rollout = collect_fisher_rollout(policy, env, n_fisher, rng);
  const Vector w = fisher_weights(rollout, weighting);
  memory.entries.push_back({policy.params(), estimate_fisher(policy, rollout, w), task_id});
}

// File layout:
//   lifeline-ewc v1
//   lambda: <value>
//   entries: <count>
//   entry: <task_id>
//   theta_star: <n>
//   <n values>
//   fisher: <n>
//   <n values>
inline void write_ewc_memory(std::ostream& out, const EwcMemory& memory) {
  out << "lifeline-ewc v1\n" << std::setprecision(17) << "lambda: " << memory.lambda << "\n";
  out << "entries: " << memory.entries.size() << "\n";
  for (const auto& e : memory.entries) {
    out << "entry: " << e.task_id << "\ntheta_star: " << e.theta_star.size() << "\n";
    for (const double v : e.theta_star) out << v << "\n";
    out << "fisher: " << e.fisher.size() << "\n";
    for (const double v : e.fisher) out << v << "\n";
  }
}

inline EwcMemory read_ewc_memory(std::istream& in) {
  const auto expect = [&](const std::string& key) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(key, 0) != 0) throw ConfigError("ewc memory: expected '" + key + "'");
    return line.substr(key.size());
  };
  const auto read_values = [&](std::size_t n) {
    ParameterVector v(n);
    for (auto& x : v) {
      std::string line;
      if (!std::getline(in, line)) throw ConfigError("ewc memory: truncated value block");
      x = std::stod(line);
    }
    return v;
  };
  if (expect("lifeline-ewc v1") != "") throw ConfigError("ewc memory: bad header");
  EwcMemory m;
  m.lambda = std::stod(expect("lambda: "));
  const auto count = std::stoul(expect("entries: "));
  for (std::size_t k = 0; k < count; ++k) {
    EwcEntry e;
    e.task_id = expect("entry: ");
    e.theta_star = read_values(std::stoul(expect("theta_star: ")));
    e.fisher = read_values(std::stoul(expect("fisher: ")));
    m.entries.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Experience replay

/// Long-term FIFO store of past transitions across tasks.
class ReplayStore {
 public:
  explicit ReplayStore(std::size_t capacity = 100'000) : capacity_(capacity) {
    require(capacity > 0, "ReplayStore: capacity must be positive");
  }

  void add(std::span<const Transition> items) {
    for (const auto& t : items) {
      if (long_term_.size() == capacity_) long_term_.pop_front();
      long_term_.push_back(t);
    }
  }

  [[nodiscard]] std::size_t size() const { return long_term_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return long_term_.empty(); }
  [[nodiscard]] const Transition& operator[](std::size_t i) const { return long_term_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Transition> long_term_;
};

/// Half uniformly sampled long-term transitions (with replacement), half the
/// most recent current transitions. Replayed items keep their stored
/// log-probabilities. With an empty store the current rollout is returned.
inline std::vector<Transition> replay_mix(const ReplayStore& store, std::span<const Transition> current,
                                          std::size_t update_interval, Rng& rng) {
  if (store.empty()) return {current.begin(), current.end()};
  const std::size_t half = update_interval / 2;
  std::vector<Transition> out;
  out.reserve(update_interval);
  for (std::size_t k = 0; k < half; ++k) out.push_back(store[rng.below(store.size())]);
  const std::size_t keep = std::min(current.size(), update_interval - half);
  out.insert(out.end(), current.end() - static_cast<std::ptrdiff_t>(keep), current.end());
  return out;
}

/// One-step bootstrapped targets for isolated (replayed) transitions under
/// the current critics.
inline TrainingBatch replay_targets(std::span<const Transition> items, const Mlp& critic, const Mlp& cost_critic,
                                    double gamma) {
  TrainingBatch b;
  b.samples.assign(items.begin(), items.end());
  for (const auto& t : items) {
    const double v = critic.forward(t.state)[0];
    const double cv = cost_critic.forward(t.state)[0];
    const double v_next = t.terminated ? 0.0 : critic.forward(t.next_state)[0];
    const double cv_next = t.terminated ? 0.0 : cost_critic.forward(t.next_state)[0];
    const double g = t.reward + gamma * v_next;
    const double cg = t.cost + gamma * cv_next;
    b.returns.push_back(g);
    b.advantages.push_back(g - v);
    b.cost_returns.push_back(cg);
    b.cost_advantages.push_back(cg - cv);
  }
  return b;
}

}  // namespace lifeline
