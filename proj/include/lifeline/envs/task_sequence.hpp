#pragma once

#include <memory>
#include <string>

#include "lifeline/core.hpp"

namespace lifeline::envs {

/// Presents a task-indexed family as one non-stationary environment. Dynamics
/// switch when the global step crosses a schedule boundary; the step that
/// crosses it is reported as truncated so no episode straddles two tasks.
/// Task identity and boundaries are visible to the agent.
class TaskSequenceEnv final : public Environment {
 public:
  TaskSequenceEnv(std::shared_ptr<const EnvironmentFamily> family, TaskSchedule schedule)
      : family_(std::move(family)), schedule_(std::move(schedule)) {
    require(family_ != nullptr, "TaskSequenceEnv: null family");
    require(!schedule_.empty(), "TaskSequenceEnv: empty schedule");
    for (const auto& e : schedule_.entries()) {
      if (!family_->has_task(e.task_id)) throw ConfigError("schedule names unknown task '" + e.task_id + "'");
    }
    inner_ = family_->make(schedule_.entries().front().task_id);
  }

  TaskSequenceEnv(const TaskSequenceEnv& other)
      : Environment(other),
        family_(other.family_),
        schedule_(other.schedule_),
        inner_(other.inner_->clone()),
        global_step_(other.global_step_),
        entry_(other.entry_),
        ended_entry_(other.ended_entry_) {}

  [[nodiscard]] std::size_t observation_dim() const override { return inner_->observation_dim(); }
  [[nodiscard]] std::size_t action_dim() const override { return inner_->action_dim(); }
  [[nodiscard]] bool has_success() const override { return inner_->has_success(); }
  [[nodiscard]] std::unique_ptr<Environment> clone() const override {
    return std::make_unique<TaskSequenceEnv>(*this);
  }

  [[nodiscard]] const TaskSchedule& schedule() const { return schedule_; }
  [[nodiscard]] std::int64_t global_step() const { return global_step_; }
  [[nodiscard]] std::size_t entry_index() const { return entry_; }
  [[nodiscard]] bool finished() const { return global_step_ >= schedule_.total_steps(); }
  [[nodiscard]] const std::string& current_task() const { return schedule_.entries()[entry_].task_id; }
  [[nodiscard]] std::int64_t current_visit() const { return schedule_.visit_index(entry_); }

  /// True when the next step to be taken is the first step of a schedule entry.
  [[nodiscard]] bool is_boundary() const { return !finished() && schedule_.entry_start(entry_) == global_step_; }

  /// True right after the step that closed a schedule entry (including the last).
  [[nodiscard]] bool entry_just_ended() const { return ended_entry_; }

  /// Fresh environment in the dynamics of an arbitrary task of the family.
  [[nodiscard]] std::unique_ptr<Environment> make_task_env(const std::string& task_id) const {
    return family_->make(task_id);
  }

 protected:
  Vector do_reset(Rng& rng) override {
    if (finished()) throw StateError("TaskSequenceEnv: schedule exhausted");
    ended_entry_ = false;
    return inner_->reset(rng);
  }

  StepResult do_step(std::span<const double> action, Rng& rng) override {
    if (finished()) throw StateError("TaskSequenceEnv: schedule exhausted");
    StepResult r = inner_->step(action, rng);
    ++global_step_;
    ended_entry_ = false;
    const bool at_end = global_step_ == schedule_.entry_start(entry_ + 1);
    if (at_end) {
      ended_entry_ = true;
      if (!r.terminated) r.truncated = true;
      if (entry_ + 1 < schedule_.size()) {
        ++entry_;
        inner_ = family_->make(schedule_.entries()[entry_].task_id);
      }
    }
    return r;
  }

 private:
  std::shared_ptr<const EnvironmentFamily> family_;
  TaskSchedule schedule_;
  std::unique_ptr<Environment> inner_;
  std::int64_t global_step_ = 0;
  std::size_t entry_ = 0;
  bool ended_entry_ = false;
};

inline std::unique_ptr<TaskSequenceEnv> wrap_task_sequence(std::shared_ptr<const EnvironmentFamily> family,
                                                           TaskSchedule schedule) {
  return std::make_unique<TaskSequenceEnv>(std::move(family), std::move(schedule));
}

}  // namespace lifeline::envs
