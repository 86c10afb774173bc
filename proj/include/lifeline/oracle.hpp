#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "lifeline/approximator.hpp"
#include "lifeline/envs/chain.hpp"

namespace lifeline::oracle {

using envs::ChainSpec;

/// pi[s][a] over agent actions, row-major.
struct TabularPolicy {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> probs;

  [[nodiscard]] double at(std::size_t s, std::size_t a) const { return probs[s * n_actions + a]; }

  void validate() const {
    if (probs.size() != n_states * n_actions) throw ContractViolation("TabularPolicy: wrong table size");
    for (std::size_t s = 0; s < n_states; ++s) {
      double sum = 0.0;
      for (std::size_t a = 0; a < n_actions; ++a) {
        if (!(at(s, a) >= 0.0)) throw ContractViolation("TabularPolicy: negative probability");
        sum += at(s, a);
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw ContractViolation("TabularPolicy: row " + std::to_string(s) + " is not a distribution");
      }
    }
  }

  static TabularPolicy deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions) {
    TabularPolicy p{actions.size(), n_actions, std::vector<double>(actions.size() * n_actions, 0.0)};
    for (std::size_t s = 0; s < actions.size(); ++s) p.probs[s * n_actions + actions.at(s)] = 1.0;
    return p;
  }

  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions) {
    return {n_states, n_actions, std::vector<double>(n_states * n_actions, 1.0 / static_cast<double>(n_actions))};
  }
};

/// Exact action distribution of a Gaussian policy acting on a chain through
/// one-hot observations and binned actions.
inline TabularPolicy from_gaussian(const GaussianPolicy& policy, const ChainSpec& spec) {
  require(policy.obs_dim() == spec.n_states && policy.action_dim() == 1,
          "from_gaussian: policy does not match the chain's observation/action layout");
  TabularPolicy t{spec.n_states, spec.n_actions, {}};
  const double sigma = std::exp(policy.log_std()[0]);
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    Vector obs(spec.n_states, 0.0);
    obs[s] = 1.0;
    const Vector row = envs::action_bin_probabilities(policy.mean(obs)[0], sigma, spec.n_actions);
    t.probs.insert(t.probs.end(), row.begin(), row.end());
  }
  return t;
}

/// Per-step signal x(s,a) = reward_weight * r(s,a) + cost_weight * c(s,a).
struct Signal {
  double reward_weight = 1.0;
  double cost_weight = 0.0;
  static constexpr Signal reward() { return {1.0, 0.0}; }
  static constexpr Signal cost() { return {0.0, 1.0}; }
  static constexpr Signal shaped(double beta) { return {1.0, -beta}; }
};

/// Exact V_pi for the signal: solves (I - gamma P_pi) V = x_pi by Gaussian
/// elimination with partial pivoting.
inline Vector policy_evaluate(const ChainSpec& spec, const TabularPolicy& pi, Signal signal, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractViolation("policy_evaluate: gamma must lie in [0, 1)");
  if (pi.n_states != spec.n_states || pi.n_actions != spec.n_actions) {
    throw ContractViolation("policy_evaluate: policy shape does not match the chain");
  }
  pi.validate();
  const std::size_t n = spec.n_states;
  std::vector<double> m(n * (n + 1), 0.0);  // augmented [I - gamma P | x]
  for (std::size_t s = 0; s < n; ++s) {
    double* row = &m[s * (n + 1)];
    row[s] = 1.0;
    for (std::size_t a = 0; a < spec.n_actions; ++a) {
      const double w = pi.at(s, a);
      if (w == 0.0) continue;
      row[n] += w * (signal.reward_weight * spec.reward(s, a) + signal.cost_weight * spec.cost(s, a));
      for (std::size_t s2 = 0; s2 < n; ++s2) row[s2] -= gamma * w * spec.prob(s, a, s2);
    }
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m[r * (n + 1) + col]) > std::abs(m[piv * (n + 1) + col])) piv = r;
    }
    if (std::abs(m[piv * (n + 1) + col]) < 1e-300) throw NumericError("policy_evaluate: singular system");
    if (piv != col) {
      for (std::size_t k = 0; k <= n; ++k) std::swap(m[piv * (n + 1) + k], m[col * (n + 1) + k]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = m[r * (n + 1) + col] / m[col * (n + 1) + col];
      if (f == 0.0) continue;
      for (std::size_t k = col; k <= n; ++k) m[r * (n + 1) + k] -= f * m[col * (n + 1) + k];
    }
  }
  Vector v(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = m[r * (n + 1) + n];
    for (std::size_t k = r + 1; k < n; ++k) acc -= m[r * (n + 1) + k] * v[k];
    v[r] = acc / m[r * (n + 1) + r];
  }
  return v;
}

struct ValueIterationResult {
  Vector values;
  std::vector<std::size_t> greedy_actions;
  TabularPolicy greedy;
};

inline double q_value(const ChainSpec& spec, const Vector& v, std::size_t s, std::size_t a, double gamma) {
  double ev = 0.0;
  for (std::size_t s2 = 0; s2 < spec.n_states; ++s2) ev += spec.prob(s, a, s2) * v[s2];
  return spec.reward(s, a) + gamma * ev;
}

/// Bellman-optimality iteration on the reward channel; argmax ties go to the
/// lowest action index.
inline ValueIterationResult value_iterate(const ChainSpec& spec, double gamma, double tol = 1e-10) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractViolation("value_iterate: gamma must lie in [0, 1)");
  const std::size_t ns = spec.n_states;
  Vector v(ns, 0.0);
  Vector next(ns, 0.0);
  bool converged = false;
  for (int iter = 0; iter < 1'000'000 && !converged; ++iter) {
    double change = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      double best = q_value(spec, v, s, 0, gamma);
      for (std::size_t a = 1; a < spec.n_actions; ++a) best = std::max(best, q_value(spec, v, s, a, gamma));
      next[s] = best;
      change = std::max(change, std::abs(best - v[s]));
    }
    v.swap(next);
    converged = change < tol;
  }
  if (!converged) throw NumericError("value_iterate: did not converge");
  ValueIterationResult out;
  out.values = v;
  for (std::size_t s = 0; s < ns; ++s) {
    std::size_t arg = 0;
    double best = q_value(spec, v, s, 0, gamma);
    for (std::size_t a = 1; a < spec.n_actions; ++a) {
      const double q = q_value(spec, v, s, a, gamma);
      if (q > best + 1e-12) {
        best = q;
        arg = a;
      }
    }
    out.greedy_actions.push_back(arg);
  }
  out.greedy = TabularPolicy::deterministic(out.greedy_actions, spec.n_actions);
  return out;
}

/// max_s |max_a Q(s,a) - V(s)|.
inline double bellman_residual(const ChainSpec& spec, const Vector& v, double gamma) {
  double worst = 0.0;
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    double best = q_value(spec, v, s, 0, gamma);
    for (std::size_t a = 1; a < spec.n_actions; ++a) best = std::max(best, q_value(spec, v, s, a, gamma));
    worst = std::max(worst, std::abs(best - v[s]));
  }
  return worst;
}

struct TaskReference {
  std::string task_id;
  ChainSpec spec;
  Vector optimal_values;  // V* of the task, from value_iterate
};

struct ConstraintRow {
  std::string task_id;
  std::size_t state = 0;
  double value = 0.0;
  double reference = 0.0;
  double forgetting_slack = 0.0;  // V - (V* - eps); >= 0 when satisfied
  double cost_value = 0.0;
  double safety_slack = 0.0;  // d - V^C; >= 0 when satisfied
  bool retains = false;
  bool safe = false;
};

struct ConstraintReport {
  std::vector<ConstraintRow> rows;
  double cost_limit = 0.0;
  double epsilon = 0.0;

  [[nodiscard]] bool feasible() const {
    return std::all_of(rows.begin(), rows.end(), [](const ConstraintRow& r) { return r.retains && r.safe; });
  }
};

/// Per task and state: V_pi >= V*_task - eps (forgetting tolerance) and
/// V^C_pi <= d (safety), both evaluated exactly.
inline ConstraintReport check_constraints(std::span<const TaskReference> tasks, const TabularPolicy& pi,
                                          double cost_limit, double epsilon) {
  if (tasks.empty()) throw ConfigError("check_constraints: no reference tasks");
  ConstraintReport rep;
  rep.cost_limit = cost_limit;
  rep.epsilon = epsilon;
  for (const auto& task : tasks) {
    if (task.optimal_values.size() != task.spec.n_states) {
      throw ConfigError("check_constraints: missing reference values for task '" + task.task_id + "'");
    }
    const Vector v = policy_evaluate(task.spec, pi, Signal::reward(), task.spec.gamma);
    const Vector vc = policy_evaluate(task.spec, pi, Signal::cost(), task.spec.gamma);
    for (std::size_t s = 0; s < task.spec.n_states; ++s) {
      ConstraintRow r;
      r.task_id = task.task_id;
      r.state = s;
      r.value = v[s];
      r.reference = task.optimal_values[s];
      r.forgetting_slack = v[s] - (task.optimal_values[s] - epsilon);
      r.cost_value = vc[s];
      r.safety_slack = cost_limit - vc[s];
      r.retains = r.forgetting_slack >= -1e-12;
      r.safe = r.safety_slack >= -1e-12;
      rep.rows.push_back(r);
    }
  }
  return rep;
}

inline void print_report(std::ostream& out, const ConstraintReport& rep) {
  out << "cost limit d = " << rep.cost_limit << ", forgetting tolerance eps = " << rep.epsilon << "\n";
  out << std::left << std::setw(8) << "task" << std::setw(7) << "state" << std::right << std::setw(12) << "V"
      << std::setw(12) << "V*" << std::setw(12) << "slack" << std::setw(12) << "V^C" << std::setw(12) << "slack"
      << "  status\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rep.rows) {
    out << std::left << std::setw(8) << r.task_id << std::setw(7) << r.state << std::right << std::setw(12)
        << r.value << std::setw(12) << r.reference << std::setw(12) << r.forgetting_slack << std::setw(12)
        << r.cost_value << std::setw(12) << r.safety_slack << "  "
        << (r.retains && r.safe ? "ok" : (!r.safe && !r.retains ? "FORGETS+UNSAFE" : (!r.safe ? "UNSAFE" : "FORGETS")))
        << "\n";
  }
  out << (rep.feasible() ? "feasible" : "INFEASIBLE") << "\n";
  out.unsetf(std::ios::fixed);
}

}  // namespace lifeline::oracle
