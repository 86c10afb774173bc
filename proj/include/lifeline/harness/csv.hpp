#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lifeline/core.hpp"
#include "lifeline/metrics.hpp"

namespace lifeline::harness {

/// Shortest text that reads back to the same double (17 significant digits).
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (const char c : line) {
    if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back().push_back(c);
    }
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(what + ": bad number '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(what + ": bad integer '" + s + "'");
  return v;
}

inline constexpr const char* kEpisodeHeader = "global_step,task_id,visit_index,total_reward,total_cost,success";

inline void write_episode_row(std::ostream& out, const EpisodeRecord& e) {
  out << e.global_step << ',' << e.task_id << ',' << e.visit_index << ',' << fmt_double(e.total_reward) << ','
      << fmt_double(e.total_cost) << ',' << (e.success ? (*e.success ? "1" : "0") : "") << '\n';
}

inline std::vector<EpisodeRecord> read_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kEpisodeHeader) throw ConfigError(path + ": unexpected header");
  std::vector<EpisodeRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ConfigError(path + ": expected 6 fields, got " + std::to_string(f.size()));
    EpisodeRecord e;
    e.global_step = parse_int(f[0], path);
    e.task_id = f[1];
    e.visit_index = parse_int(f[2], path);
    e.total_reward = parse_double(f[3], path);
    e.total_cost = parse_double(f[4], path);
    if (!f[5].empty()) e.success = f[5] == "1";
    out.push_back(std::move(e));
  }
  return out;
}

inline constexpr const char* kSummaryHeader =
    "algorithm,seed,task_id,final_reward,normalized_forgetting,total_cost,success_rate,status";

inline void write_summary_rows(std::ostream& out, const std::string& algorithm, RunSeed seed,
                               const std::vector<metrics::TaskSummary>& rows, bool failed) {
  const char* status = failed ? "failed" : "ok";
  if (rows.empty()) {
    out << algorithm << ',' << seed.value << ",,,,,," << status << '\n';
    return;
  }
  for (const auto& t : rows) {
    out << algorithm << ',' << seed.value << ',' << t.task_id << ',' << fmt_double(t.final_reward) << ','
        << fmt_optional(t.normalized_forgetting.value) << ',' << fmt_double(t.total_cost) << ','
        << fmt_optional(t.success_rate) << ',' << status << '\n';
  }
}

}  // namespace lifeline::harness
