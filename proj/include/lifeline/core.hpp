#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lifeline/error.hpp"
#include "lifeline/rng.hpp"

namespace lifeline {

using Vector = std::vector<double>;

/// Flat, ordered list of every weight of one function approximator.
using ParameterVector = std::vector<double>;

struct RunSeed {
  std::uint64_t value = 0;
  friend bool operator==(const RunSeed&, const RunSeed&) = default;
};

/// One environment step as stored by the learner. Costs are non-negative
/// penalties; a single cost channel is carried.
struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  double cost = 0.0;
  Vector next_state;
  bool terminated = false;
  bool truncated = false;
  double log_prob = 0.0;
  double value = 0.0;
  double cost_value = 0.0;
  std::string task_id;
};

struct EpisodeRecord {
  double total_reward = 0.0;
  double total_cost = 0.0;
  std::int64_t length = 0;
  std::optional<bool> success;  // empty for environments without a goal
  std::string task_id;
  std::int64_t visit_index = 0;
  std::int64_t global_step = 0;  // step count at which the episode ended
};

// ---------------------------------------------------------------------------
// Task schedule

struct ScheduleEntry {
  std::string task_id;
  std::int64_t steps = 0;
};

struct SchedulePosition {
  std::string task_id;
  bool is_boundary = false;
  std::size_t entry_index = 0;
};

class TaskSchedule {
 public:
  TaskSchedule() = default;

  explicit TaskSchedule(std::vector<ScheduleEntry> entries) : entries_(std::move(entries)) {
    require(!entries_.empty(), "TaskSchedule: no entries");
    starts_.reserve(entries_.size() + 1);
    std::int64_t acc = 0;
    for (const auto& e : entries_) {
      require(e.steps > 0, "TaskSchedule: entry '" + e.task_id + "' has non-positive budget");
      require(!e.task_id.empty(), "TaskSchedule: empty task id");
      starts_.push_back(acc);
      acc += e.steps;
    }
    starts_.push_back(acc);
  }

  [[nodiscard]] const std::vector<ScheduleEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }
  [[nodiscard]] std::int64_t total_steps() const { return starts_.empty() ? 0 : starts_.back(); }
  [[nodiscard]] std::int64_t entry_start(std::size_t k) const { return starts_.at(k); }

  [[nodiscard]] SchedulePosition position(std::int64_t global_step) const {
    if (global_step < 0 || global_step >= total_steps()) {
      throw RangeError("TaskSchedule: step " + std::to_string(global_step) + " outside [0, " +
                       std::to_string(total_steps()) + ")");
    }
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), global_step);
    const auto k = static_cast<std::size_t>(std::distance(starts_.begin(), it) - 1);
    return {entries_[k].task_id, starts_[k] == global_step, k};
  }

  /// Distinct task ids in first-appearance order.
  [[nodiscard]] std::vector<std::string> task_set() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (std::find(out.begin(), out.end(), e.task_id) == out.end()) out.push_back(e.task_id);
    }
    return out;
  }

  /// Distinct task ids of entries strictly before position k.
  [[nodiscard]] std::vector<std::string> completed_before(std::size_t k) const {
    require(k <= entries_.size(), "TaskSchedule: entry index out of range");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::find(out.begin(), out.end(), entries_[i].task_id) == out.end()) {
        out.push_back(entries_[i].task_id);
      }
    }
    return out;
  }

  /// Number of earlier entries with the same task id as entry k.
  [[nodiscard]] std::int64_t visit_index(std::size_t k) const {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < k; ++i) n += entries_[i].task_id == entries_.at(k).task_id;
    return n;
  }

 private:
  std::vector<ScheduleEntry> entries_;
  std::vector<std::int64_t> starts_;
};

/// Task active at `global_step` and whether that step opens a schedule entry.
inline std::pair<std::string, bool> advance_schedule(const TaskSchedule& sched,
                                                     std::int64_t global_step) {
  auto pos = sched.position(global_step);
  return {std::move(pos.task_id), pos.is_boundary};
}

// ---------------------------------------------------------------------------
// Environment interface

struct StepResult {
  Vector observation;
  double reward = 0.0;
  double cost = 0.0;
  bool terminated = false;
  bool truncated = false;
  bool success = false;
};

/// A constrained MDP under one fixed task. The public `reset`/`step` pair
/// enforces the episode lifecycle; subclasses implement the dynamics.
class Environment {
 public:
  virtual ~Environment() = default;

  [[nodiscard]] virtual std::size_t observation_dim() const = 0;
  [[nodiscard]] virtual std::size_t action_dim() const = 0;
  [[nodiscard]] virtual bool has_success() const { return false; }
  [[nodiscard]] virtual std::unique_ptr<Environment> clone() const = 0;

  Vector reset(Rng& rng) {
    active_ = true;
    return do_reset(rng);
  }

  StepResult step(std::span<const double> action, Rng& rng) {
    if (action.size() != action_dim()) {
      throw ContractViolation("Environment::step: action has dimension " +
                              std::to_string(action.size()) + ", expected " +
                              std::to_string(action_dim()));
    }
    if (!active_) throw StateError("Environment::step: episode finished; call reset() first");
    StepResult out = do_step(action, rng);
    if (out.cost < 0.0 || !std::isfinite(out.cost)) {
      throw NumericError("Environment::step: cost must be finite and non-negative");
    }
    if (out.terminated || out.truncated) active_ = false;
    return out;
  }

  [[nodiscard]] bool episode_active() const { return active_; }

 protected:
  Environment() = default;
  Environment(const Environment&) = default;
  Environment& operator=(const Environment&) = default;

  virtual Vector do_reset(Rng& rng) = 0;
  virtual StepResult do_step(std::span<const double> action, Rng& rng) = 0;

 private:
  bool active_ = false;
};

inline StepResult nscmdp_step(Environment& env, std::span<const double> action, Rng& rng) {
  return env.step(action, rng);
}

/// Task-indexed family of environments: one parameterisation per task id.
class EnvironmentFamily {
 public:
  virtual ~EnvironmentFamily() = default;
  [[nodiscard]] virtual bool has_task(const std::string& task_id) const = 0;
  [[nodiscard]] virtual std::unique_ptr<Environment> make(const std::string& task_id) const = 0;
  [[nodiscard]] virtual std::vector<std::string> task_ids() const = 0;
};

}  // namespace lifeline
