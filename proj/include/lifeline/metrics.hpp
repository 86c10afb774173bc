#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lifeline/core.hpp"

namespace lifeline::metrics {

inline constexpr std::size_t kWindow = 20;

/// Mean over a window that shrinks to the available episode count.
struct WindowedMean {
  double value = 0.0;
  std::size_t window = 0;
};

struct TaskVisitStats {
  std::string task_id;
  std::int64_t visit_index = 0;
  std::size_t episodes = 0;
  WindowedMean initial_reward;
  WindowedMean final_reward;
  std::optional<WindowedMean> immediate_reward;  // first episodes of the next visit to this task
  double total_cost = 0.0;
  std::optional<double> success_rate;
};

inline WindowedMean window_mean(std::span<const EpisodeRecord> eps, bool from_end, std::size_t window = kWindow) {
  if (eps.empty()) throw ContractViolation("metrics: empty visit");
  const std::size_t w = std::min(window, eps.size());
  const std::size_t begin = from_end ? eps.size() - w : 0;
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + w; ++i) sum += eps[i].total_reward;
  return {sum / static_cast<double>(w), w};
}

/// Mean undiscounted episode reward over the last min(20, n) episodes of a visit.
inline WindowedMean final_task_reward(std::span<const EpisodeRecord> visit) { return window_mean(visit, true); }

inline WindowedMean initial_task_reward(std::span<const EpisodeRecord> visit) { return window_mean(visit, false); }

/// Mean of the success flags; empty when the environment has no goal.
inline std::optional<double> success_rate(std::span<const EpisodeRecord> visit) {
  if (visit.empty() || !visit.front().success.has_value()) return std::nullopt;
  double hits = 0.0;
  for (const auto& e : visit) hits += e.success.value_or(false) ? 1.0 : 0.0;
  return hits / static_cast<double>(visit.size());
}

/// r_final(visit k) - r_immediate(visit k+1); negative means forward transfer.
inline double forgetting(double final_reward, double immediate_reward) { return final_reward - immediate_reward; }

/// Groups consecutive episodes sharing (task_id, visit_index) into visits, in
/// stream order, and links each visit to the next visit of the same task.
inline std::vector<TaskVisitStats> split_visits(std::span<const EpisodeRecord> records) {
  std::vector<TaskVisitStats> visits;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= records.size(); ++i) {
    if (i == records.size() || records[i].task_id != records[start].task_id ||
        records[i].visit_index != records[start].visit_index) {
      if (i > start) ranges.emplace_back(start, i);
      start = i;
    }
  }
  for (const auto& [lo, hi] : ranges) {
    const std::span<const EpisodeRecord> v = records.subspan(lo, hi - lo);
    TaskVisitStats s;
    s.task_id = v.front().task_id;
    s.visit_index = v.front().visit_index;
    s.episodes = v.size();
    s.initial_reward = initial_task_reward(v);
    s.final_reward = final_task_reward(v);
    for (const auto& e : v) s.total_cost += e.total_cost;
    s.success_rate = success_rate(v);
    visits.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < visits.size(); ++k) {
    for (std::size_t j = k + 1; j < visits.size(); ++j) {
      if (visits[j].task_id == visits[k].task_id) {
        visits[k].immediate_reward = visits[j].initial_reward;
        break;
      }
    }
  }
  return visits;
}

/// Per-visit cost sums averaged over the visits of one task.
inline double total_cost(std::span<const TaskVisitStats> visits_of_task) {
  if (visits_of_task.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& v : visits_of_task) sum += v.total_cost;
  return sum / static_cast<double>(visits_of_task.size());
}

struct NormalizedForgetting {
  std::optional<double> value;  // empty when the task is never revisited
  bool degenerate = false;      // first-visit reward range below 1e-8
};

/// Mean forgetting over the task's revisits divided by |final - initial| of
/// its first visit (denominator floored at 1e-8).
inline NormalizedForgetting normalized_forgetting(std::span<const TaskVisitStats> visits_of_task) {
  NormalizedForgetting out;
  if (visits_of_task.empty()) return out;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : visits_of_task) {
    if (!v.immediate_reward) continue;
    sum += forgetting(v.final_reward.value, v.immediate_reward->value);
    ++n;
  }
  if (n == 0) return out;
  const auto& first = visits_of_task.front();
  const double range = std::abs(first.final_reward.value - first.initial_reward.value);
  out.degenerate = range < 1e-8;
  out.value = (sum / static_cast<double>(n)) / std::max(range, 1e-8);
  return out;
}

struct TaskSummary {
  std::string task_id;
  std::size_t visits = 0;
  double final_reward = 0.0;  // mean of per-visit final rewards
  NormalizedForgetting normalized_forgetting;
  double total_cost = 0.0;
  std::optional<double> success_rate;  // mean of per-visit success rates
};

/// One row per task, tasks in first-appearance order.
inline std::vector<TaskSummary> summarize(std::span<const EpisodeRecord> records) {
  const std::vector<TaskVisitStats> visits = split_visits(records);
  std::vector<std::string> order;
  for (const auto& v : visits) {
    if (std::find(order.begin(), order.end(), v.task_id) == order.end()) order.push_back(v.task_id);
  }
  std::vector<TaskSummary> out;
  for (const auto& id : order) {
    std::vector<TaskVisitStats> mine;
    for (const auto& v : visits) {
      if (v.task_id == id) mine.push_back(v);
    }
    TaskSummary s;
    s.task_id = id;
    s.visits = mine.size();
    double fr = 0.0;
    for (const auto& v : mine) fr += v.final_reward.value;
    s.final_reward = fr / static_cast<double>(mine.size());
    s.normalized_forgetting = normalized_forgetting(mine);
    s.total_cost = total_cost(mine);
    if (mine.front().success_rate) {
      double sr = 0.0;
      for (const auto& v : mine) sr += v.success_rate.value_or(0.0);
      s.success_rate = sr / static_cast<double>(mine.size());
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Aggregate of one seed's task rows: plain means over tasks; normalized
/// forgetting over the tasks where it is defined.
struct RunAggregate {
  double final_reward = 0.0;
  std::optional<double> normalized_forgetting;
  double total_cost = 0.0;
  std::optional<double> success_rate;
};

inline RunAggregate aggregate_tasks(std::span<const TaskSummary> tasks) {
  RunAggregate a;
  if (tasks.empty()) return a;
  double nf = 0.0;
  std::size_t nf_n = 0;
  double sr = 0.0;
  std::size_t sr_n = 0;
  for (const auto& t : tasks) {
    a.final_reward += t.final_reward;
    a.total_cost += t.total_cost;
    if (t.normalized_forgetting.value) {
      nf += *t.normalized_forgetting.value;
      ++nf_n;
    }
    if (t.success_rate) {
      sr += *t.success_rate;
      ++sr_n;
    }
  }
  const auto n = static_cast<double>(tasks.size());
  a.final_reward /= n;
  a.total_cost /= n;
  if (nf_n > 0) a.normalized_forgetting = nf / static_cast<double>(nf_n);
  if (sr_n > 0) a.success_rate = sr / static_cast<double>(sr_n);
  return a;
}

/// Mean and sample standard deviation (n - 1; 0 for a single value).
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (const double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

inline double median(std::vector<double> xs) {
  require(!xs.empty(), "median: empty input");
  std::sort(xs.begin(), xs.end());
  const std::size_t h = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[h] : 0.5 * (xs[h - 1] + xs[h]);
}

}  // namespace lifeline::metrics
