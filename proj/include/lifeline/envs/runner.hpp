#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>

#include "lifeline/core.hpp"

namespace lifeline::envs {

/// Point-mass "runner" pushed along a line. The actuation gain is the task
/// knob: damage scales how strongly an action accelerates the body.
struct RunnerParams {
  double gain = 1.0;
  double drag = 1.0;
  double dt = 0.1;
  double v_limit = 0.5;
  // Optimal cruising speed is g^2 / (2 pen drag^2): above v_limit for nominal
  // and back, below it for front.
  double action_penalty = 0.5;
  std::int64_t episode_len = 200;
  double obs_noise_std = 0.0;
  // Limb sensors read 1 while the limb works and 0 once it is damaged.
  bool front_limb = true;
  bool back_limb = true;

  void validate() const {
    if (!(gain != 0.0 && std::isfinite(gain))) throw ConfigError("runner: gain must be finite and non-zero");
    if (!(drag >= 0.0 && std::isfinite(drag))) throw ConfigError("runner: drag must be >= 0");
    if (!(dt > 0.0 && dt <= 1.0)) throw ConfigError("runner: dt must lie in (0, 1]");
    if (!(v_limit > 0.0)) throw ConfigError("runner: v_limit must be > 0");
    if (!(action_penalty >= 0.0)) throw ConfigError("runner: action_penalty must be >= 0");
    if (episode_len <= 0) throw ConfigError("runner: episode_len must be positive");
    if (!(obs_noise_std >= 0.0)) throw ConfigError("runner: obs_noise_std must be >= 0");
  }
};

struct RunnerState {
  double x = 0.0;  // m
  double v = 0.0;  // m/s
};

struct RunnerOutcome {
  RunnerState next;
  double reward = 0.0;
  double cost = 0.0;
};

/// Semi-implicit Euler step. The action is clipped to [-1, 1]; the cost is the
/// indicator of the post-step velocity exceeding the limit.
inline RunnerOutcome runner_step(const RunnerParams& p, RunnerState s, double action) {
  if (!std::isfinite(s.x) || !std::isfinite(s.v) || !std::isfinite(action)) {
    throw ContractViolation("runner_step: non-finite state or action");
  }
  const double a = std::clamp(action, -1.0, 1.0);
  RunnerOutcome out;
  out.next.v = s.v + (p.gain * a - p.drag * s.v) * p.dt;
  out.next.x = s.x + out.next.v * p.dt;
  out.reward = (out.next.x - s.x) / p.dt - p.action_penalty * a * a;
  out.cost = out.next.v > p.v_limit ? 1.0 : 0.0;
  return out;
}

class RunnerEnv final : public Environment {
 public:
  explicit RunnerEnv(RunnerParams params) : params_(params) { params_.validate(); }

  [[nodiscard]] std::size_t observation_dim() const override { return 3; }
  [[nodiscard]] std::size_t action_dim() const override { return 1; }
  [[nodiscard]] std::unique_ptr<Environment> clone() const override {
    return std::make_unique<RunnerEnv>(*this);
  }

  [[nodiscard]] const RunnerParams& params() const { return params_; }
  [[nodiscard]] RunnerState state() const { return state_; }

  /// Places the body at an arbitrary state; the episode clock is restarted.
  void set_state(RunnerState s) {
    state_ = s;
    t_ = 0;
  }

 protected:
  Vector do_reset(Rng& rng) override {
    state_ = {};
    t_ = 0;
    return observe(rng);
  }

  StepResult do_step(std::span<const double> action, Rng& rng) override {
    const RunnerOutcome o = runner_step(params_, state_, action[0]);
    state_ = o.next;
    ++t_;
    StepResult r;
    r.reward = o.reward;
    r.cost = o.cost;
    r.truncated = t_ >= params_.episode_len;
    r.observation = observe(rng);
    return r;
  }

 private:
  Vector observe(Rng& rng) const {
    double v = state_.v;
    if (params_.obs_noise_std > 0.0) v += params_.obs_noise_std * rng.normal();
    return {v, params_.front_limb ? 1.0 : 0.0, params_.back_limb ? 1.0 : 0.0};
  }

  RunnerParams params_;
  RunnerState state_;
  std::int64_t t_ = 0;
};

class RunnerFamily final : public EnvironmentFamily {
 public:
  explicit RunnerFamily(std::map<std::string, RunnerParams> tasks) : tasks_(std::move(tasks)) {
    for (const auto& [id, p] : tasks_) p.validate();
  }

  [[nodiscard]] bool has_task(const std::string& id) const override { return tasks_.contains(id); }

  [[nodiscard]] std::unique_ptr<Environment> make(const std::string& id) const override {
    const auto it = tasks_.find(id);
    if (it == tasks_.end()) throw ConfigError("runner: unknown task '" + id + "'");
    return std::make_unique<RunnerEnv>(it->second);
  }

  [[nodiscard]] std::vector<std::string> task_ids() const override {
    std::vector<std::string> out;
    for (const auto& [id, p] : tasks_) out.push_back(id);
    return out;
  }

  [[nodiscard]] const std::map<std::string, RunnerParams>& tasks() const { return tasks_; }

 private:
  std::map<std::string, RunnerParams> tasks_;
};

struct RunnerTaskSet {
  std::map<std::string, RunnerParams> tasks;
  TaskSchedule schedule;
};

/// nominal / front / back parameterisations derived from `base`, plus the
/// eight-entry cyclic damage schedule with equal budgets.
inline RunnerTaskSet runner_task_set(const RunnerParams& base = {}, std::int64_t steps_per_task = 50'000) {
  RunnerTaskSet set;
  RunnerParams nominal = base;
  nominal.gain = 1.0;
  RunnerParams front = base;
  front.gain = 0.4;
  front.front_limb = false;
  RunnerParams back = base;
  back.gain = 1.6;
  back.drag = 2.0 * base.drag;
  back.back_limb = false;
  set.tasks = {{"nominal", nominal}, {"front", front}, {"back", back}};

  std::vector<ScheduleEntry> entries;
  for (const char* id : {"nominal", "back", "nominal", "front", "back", "nominal", "front", "nominal"}) {
    entries.push_back({id, steps_per_task});
  }
  set.schedule = TaskSchedule(std::move(entries));
  return set;
}

}  // namespace lifeline::envs
