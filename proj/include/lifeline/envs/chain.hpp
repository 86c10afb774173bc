#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>

#include "lifeline/core.hpp"

namespace lifeline::envs {

/// Finite constrained MDP with explicit tables, small enough to solve exactly.
/// Tables are indexed by the canonical action; `action_order[k]` names the
/// canonical action that agent action k triggers, which is how tasks permute
/// action meanings without touching the tables.
struct ChainSpec {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> p;  // [s][a][s'] row-major
  std::vector<double> r;  // [s][a]
  std::vector<double> c;  // [s][a]
  std::size_t goal_state = 0;
  std::size_t start_state = 0;
  double gamma = 0.9;
  std::int64_t max_episode_len = 50;
  std::vector<std::size_t> action_order;

  [[nodiscard]] std::size_t canonical(std::size_t agent_action) const {
    return action_order.empty() ? agent_action : action_order[agent_action];
  }
  [[nodiscard]] double prob(std::size_t s, std::size_t a, std::size_t s2) const {
    return p[(s * n_actions + canonical(a)) * n_states + s2];
  }
  [[nodiscard]] double reward(std::size_t s, std::size_t a) const { return r[s * n_actions + canonical(a)]; }
  [[nodiscard]] double cost(std::size_t s, std::size_t a) const { return c[s * n_actions + canonical(a)]; }

  void validate() const {
    if (n_states == 0 || n_actions == 0) throw ConfigError("chain: empty state or action space");
    if (p.size() != n_states * n_actions * n_states) throw ConfigError("chain: transition table has wrong size");
    if (r.size() != n_states * n_actions || c.size() != n_states * n_actions) {
      throw ConfigError("chain: reward/cost table has wrong size");
    }
    if (goal_state >= n_states || start_state >= n_states) throw ConfigError("chain: goal/start out of range");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("chain: gamma must lie in [0, 1)");
    if (max_episode_len <= 0) throw ConfigError("chain: max_steps must be positive");
    if (!action_order.empty()) {
      if (action_order.size() != n_actions) throw ConfigError("chain: action_order has wrong length");
      std::vector<bool> seen(n_actions, false);
      for (const auto a : action_order) {
        if (a >= n_actions || seen[a]) throw ConfigError("chain: action_order is not a permutation");
        seen[a] = true;
      }
    }
    for (std::size_t s = 0; s < n_states; ++s) {
      for (std::size_t a = 0; a < n_actions; ++a) {
        double sum = 0.0;
        for (std::size_t s2 = 0; s2 < n_states; ++s2) {
          const double q = p[(s * n_actions + a) * n_states + s2];
          if (!(q >= 0.0)) throw ConfigError("chain: negative transition probability");
          sum += q;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
          throw ConfigError("chain: row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                            std::to_string(sum));
        }
        if (!(c[s * n_actions + a] >= 0.0)) throw ConfigError("chain: negative cost");
        if (!std::isfinite(r[s * n_actions + a])) throw ConfigError("chain: non-finite reward");
      }
    }
  }
};

/// Bin edges split [-1, 1] into n equal cells; the outer cells extend to
/// infinity so every real action maps to some discrete action.
inline std::size_t discretize_action(double a, std::size_t n_actions) {
  for (std::size_t k = 1; k < n_actions; ++k) {
    const double edge = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(n_actions);
    if (a < edge) return k - 1;
  }
  return n_actions - 1;
}

/// Probability mass a 1-D Gaussian N(mean, std) puts in each action bin.
inline Vector action_bin_probabilities(double mean, double std, std::size_t n_actions) {
  const auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (std * std::sqrt(2.0))); };
  Vector out(n_actions);
  double prev = 0.0;
  for (std::size_t k = 0; k < n_actions; ++k) {
    double upper = 1.0;
    if (k + 1 < n_actions) {
      upper = cdf(-1.0 + 2.0 * static_cast<double>(k + 1) / static_cast<double>(n_actions));
    }
    out[k] = upper - prev;
    prev = upper;
  }
  return out;
}

struct ChainOutcome {
  std::size_t next_state = 0;
  double reward = 0.0;
  double cost = 0.0;
  bool terminated = false;
};

inline ChainOutcome chain_step(const ChainSpec& spec, std::size_t state, std::size_t action, Rng& rng) {
  if (state >= spec.n_states) throw RangeError("chain_step: state " + std::to_string(state) + " out of range");
  if (action >= spec.n_actions) throw RangeError("chain_step: action " + std::to_string(action) + " out of range");
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t next = spec.n_states - 1;
  for (std::size_t s2 = 0; s2 < spec.n_states; ++s2) {
    acc += spec.prob(state, action, s2);
    if (u < acc) {
      next = s2;
      break;
    }
  }
  // Guard against rounding at the top of the row: land on the last state with mass.
  if (u >= acc) {
    for (std::size_t s2 = spec.n_states; s2-- > 0;) {
      if (spec.prob(state, action, s2) > 0.0) {
        next = s2;
        break;
      }
    }
  }
  return {next, spec.reward(state, action), spec.cost(state, action), next == spec.goal_state};
}

/// Observation is the one-hot encoding of the state; the single continuous
/// action is binned with discretize_action.
class ChainEnv final : public Environment {
 public:
  explicit ChainEnv(ChainSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  [[nodiscard]] std::size_t observation_dim() const override { return spec_.n_states; }
  [[nodiscard]] std::size_t action_dim() const override { return 1; }
  [[nodiscard]] bool has_success() const override { return true; }
  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainEnv>(*this); }

  [[nodiscard]] const ChainSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t state() const { return state_; }

 protected:
  Vector do_reset(Rng&) override {
    state_ = spec_.start_state;
    t_ = 0;
    return one_hot(state_);
  }

  StepResult do_step(std::span<const double> action, Rng& rng) override {
    if (!std::isfinite(action[0])) throw ContractViolation("chain: non-finite action");
    const ChainOutcome o = chain_step(spec_, state_, discretize_action(action[0], spec_.n_actions), rng);
    state_ = o.next_state;
    ++t_;
    StepResult r;
    r.reward = o.reward;
    r.cost = o.cost;
    r.terminated = o.terminated;
    r.success = o.terminated;
    r.truncated = !o.terminated && t_ >= spec_.max_episode_len;
    r.observation = one_hot(state_);
    return r;
  }

 private:
  [[nodiscard]] Vector one_hot(std::size_t s) const {
    Vector v(spec_.n_states, 0.0);
    v[s] = 1.0;
    return v;
  }

  ChainSpec spec_;
  std::size_t state_ = 0;
  std::int64_t t_ = 0;
};

class ChainFamily final : public EnvironmentFamily {
 public:
  explicit ChainFamily(std::map<std::string, ChainSpec> tasks) : tasks_(std::move(tasks)) {
    for (const auto& [id, s] : tasks_) s.validate();
  }
  [[nodiscard]] bool has_task(const std::string& id) const override { return tasks_.contains(id); }
  [[nodiscard]] std::unique_ptr<Environment> make(const std::string& id) const override {
    return std::make_unique<ChainEnv>(spec(id));
  }
  [[nodiscard]] std::vector<std::string> task_ids() const override {
    std::vector<std::string> out;
    for (const auto& [id, s] : tasks_) out.push_back(id);
    return out;
  }
  [[nodiscard]] const ChainSpec& spec(const std::string& id) const {
    const auto it = tasks_.find(id);
    if (it == tasks_.end()) throw ConfigError("chain: unknown task '" + id + "'");
    return it->second;
  }

 private:
  std::map<std::string, ChainSpec> tasks_;
};

/// Five-state corridor 0..4 with the goal at 4. Action 0 ("step") advances one
/// cell, action 1 ("dash") advances two, capped at the goal. Landing on the
/// goal pays 1; landing on hazard cell 2 costs 1. The fastest route from the
/// start dashes straight through the hazard; the detour steps to 1 and dashes
/// over it.
inline ChainSpec constrained_chain(double gamma = 0.9) {
  ChainSpec s;
  s.n_states = 5;
  s.n_actions = 2;
  s.goal_state = 4;
  s.start_state = 0;
  s.gamma = gamma;
  s.max_episode_len = 20;
  s.p.assign(5 * 2 * 5, 0.0);
  s.r.assign(5 * 2, 0.0);
  s.c.assign(5 * 2, 0.0);
  constexpr std::size_t kHazard = 2;
  for (std::size_t st = 0; st < 5; ++st) {
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t next = st == s.goal_state ? st : std::min<std::size_t>(st + 1 + a, s.goal_state);
      s.p[(st * 2 + a) * 5 + next] = 1.0;
      if (st != s.goal_state) {
        s.r[st * 2 + a] = next == s.goal_state ? 1.0 : 0.0;
        s.c[st * 2 + a] = next == kHazard ? 1.0 : 0.0;
      }
    }
  }
  return s;
}

struct ChainTaskSet {
  std::map<std::string, ChainSpec> tasks;
  TaskSchedule schedule;
};

/// Task "A" uses the canonical action meanings, task "B" swaps them.
inline ChainTaskSet chain_task_set(const ChainSpec& base = constrained_chain(), std::int64_t steps_per_task = 5'000,
                                   std::size_t entries = 6) {
  ChainTaskSet set;
  ChainSpec a = base;
  ChainSpec b = base;
  b.action_order.resize(base.n_actions);
  std::iota(b.action_order.rbegin(), b.action_order.rend(), std::size_t{0});
  set.tasks = {{"A", a}, {"B", b}};
  std::vector<ScheduleEntry> e;
  for (std::size_t k = 0; k < entries; ++k) e.push_back({k % 2 == 0 ? "A" : "B", steps_per_task});
  set.schedule = TaskSchedule(std::move(e));
  return set;
}

// ---------------------------------------------------------------------------
// Plain-text table format:
//
//   n_states 5
//   n_actions 2
//   goal 4
//   start 0
//   gamma 0.9
//   max_steps 20              (optional)
//   action_order 1 0          (optional)
//   <s> <a> <p_0> ... <p_{n-1}> <reward> <cost>     one line per (s, a)
//
// '#' starts a comment.

inline ChainSpec parse_chain_spec(std::istream& in) {
  ChainSpec s;
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    const auto bad = [&](const std::string& why) {
      return ConfigError("chain spec line " + std::to_string(lineno) + ": " + why);
    };
    if (head == "n_states") {
      ls >> s.n_states;
    } else if (head == "n_actions") {
      ls >> s.n_actions;
    } else if (head == "goal") {
      ls >> s.goal_state;
    } else if (head == "start") {
      ls >> s.start_state;
    } else if (head == "gamma") {
      ls >> s.gamma;
    } else if (head == "max_steps") {
      ls >> s.max_episode_len;
    } else if (head == "action_order") {
      std::size_t a = 0;
      while (ls >> a) s.action_order.push_back(a);
      ls.clear();
    } else if (std::isdigit(static_cast<unsigned char>(head[0]))) {
      std::size_t st = 0;
      std::size_t a = 0;
      try {
        st = std::stoul(head);
      } catch (const std::exception&) {
        throw bad("bad state index");
      }
      if (!(ls >> a)) throw bad("missing action index");
      std::vector<double> vals;
      double v = 0.0;
      while (ls >> v) vals.push_back(v);
      if (!ls.eof()) throw bad("unparsable number");
      rows[{st, a}] = std::move(vals);
      continue;
    } else {
      throw bad("unknown key '" + head + "'");
    }
    if (ls.fail()) throw bad("malformed value for '" + head + "'");
  }
  if (s.n_states == 0 || s.n_actions == 0) throw ConfigError("chain spec: n_states and n_actions are required");
  s.p.assign(s.n_states * s.n_actions * s.n_states, 0.0);
  s.r.assign(s.n_states * s.n_actions, 0.0);
  s.c.assign(s.n_states * s.n_actions, 0.0);
  if (rows.size() != s.n_states * s.n_actions) {
    throw ConfigError("chain spec: expected " + std::to_string(s.n_states * s.n_actions) + " rows, got " +
                      std::to_string(rows.size()));
  }
  for (const auto& [key, vals] : rows) {
    const auto [st, a] = key;
    if (st >= s.n_states || a >= s.n_actions) throw ConfigError("chain spec: row index out of range");
    if (vals.size() != s.n_states + 2) {
      throw ConfigError("chain spec: row (" + std::to_string(st) + "," + std::to_string(a) + ") needs " +
                        std::to_string(s.n_states + 2) + " numbers");
    }
    std::copy_n(vals.begin(), s.n_states, s.p.begin() + static_cast<std::ptrdiff_t>((st * s.n_actions + a) * s.n_states));
    s.r[st * s.n_actions + a] = vals[s.n_states];
    s.c[st * s.n_actions + a] = vals[s.n_states + 1];
  }
  s.validate();
  return s;
}

inline ChainSpec load_chain_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open chain spec '" + path + "'");
  return parse_chain_spec(in);
}

inline void write_chain_spec(std::ostream& out, const ChainSpec& s) {
  out << std::setprecision(17);
  out << "n_states " << s.n_states << "\nn_actions " << s.n_actions << "\ngoal " << s.goal_state << "\nstart "
      << s.start_state << "\ngamma " << s.gamma << "\nmax_steps " << s.max_episode_len << "\n";
  if (!s.action_order.empty()) {
    out << "action_order";
    for (const auto a : s.action_order) out << ' ' << a;
    out << "\n";
  }
  for (std::size_t st = 0; st < s.n_states; ++st) {
    for (std::size_t a = 0; a < s.n_actions; ++a) {
      out << st << ' ' << a;
      for (std::size_t s2 = 0; s2 < s.n_states; ++s2) out << ' ' << s.p[(st * s.n_actions + a) * s.n_states + s2];
      out << ' ' << s.r[st * s.n_actions + a] << ' ' << s.c[st * s.n_actions + a] << "\n";
    }
  }
}

}  // namespace lifeline::envs
