#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lifeline/harness/csv.hpp"
#include "lifeline/metrics.hpp"

namespace lifeline::harness {

inline constexpr std::size_t kCurveWindow = 100;

struct SeedReport {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool failed = false;
  std::vector<metrics::TaskSummary> tasks;
  metrics::RunAggregate aggregate;
};

struct AlgorithmReport {
  std::string algorithm;
  std::vector<SeedReport> seeds;
  std::size_t failed_seeds = 0;
  metrics::MeanStd final_reward;
  metrics::MeanStd normalized_forgetting;
  metrics::MeanStd total_cost;
  metrics::MeanStd success_rate;
};

struct Report {
  std::vector<AlgorithmReport> algorithms;
};

/// Trailing mean of up to `window` episodes, one row per episode.
inline void write_curve(const std::filesystem::path& path, const std::vector<EpisodeRecord>& eps,
                        std::size_t window = kCurveWindow) {
  std::ofstream out(path);
  out << "episode,global_step,task_id,reward_smoothed,cost_smoothed\n";
  std::deque<const EpisodeRecord*> q;
  double rs = 0.0;
  double cs = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    q.push_back(&eps[i]);
    rs += eps[i].total_reward;
    cs += eps[i].total_cost;
    if (q.size() > window) {
      rs -= q.front()->total_reward;
      cs -= q.front()->total_cost;
      q.pop_front();
    }
    const auto n = static_cast<double>(q.size());
    out << i << ',' << eps[i].global_step << ',' << eps[i].task_id << ',' << fmt_double(rs / n) << ','
        << fmt_double(cs / n) << '\n';
  }
}

namespace detail {

inline std::string algorithm_of(const std::filesystem::path& config_path) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(config_path.string(), pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  return pt.get<std::string>("experiment.algorithm", "ppo");
}

}  // namespace detail

/// Rebuilds every statistic from the CSVs below `root`. An experiment is any
/// directory holding config.ini and seed_<n>/episodes.csv.
inline Report build_report(const std::filesystem::path& root, bool write_curves = true) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ConfigError("report: " + root.string() + " is not a directory");
  std::vector<fs::path> experiments;
  if (fs::exists(root / "config.ini")) experiments.push_back(root);
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "config.ini" && entry.path().parent_path() != root) {
      experiments.push_back(entry.path().parent_path());
    }
  }
  std::sort(experiments.begin(), experiments.end());

  std::map<std::string, AlgorithmReport> by_alg;
  for (const auto& exp : experiments) {
    const std::string alg = detail::algorithm_of(exp / "config.ini");
    std::vector<fs::path> seed_dirs;
    for (const auto& e : fs::directory_iterator(exp)) {
      if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0 &&
          fs::exists(e.path() / "episodes.csv")) {
        seed_dirs.push_back(e.path());
      }
    }
    std::sort(seed_dirs.begin(), seed_dirs.end());
    AlgorithmReport& ar = by_alg[alg];
    ar.algorithm = alg;
    for (const auto& sd : seed_dirs) {
      SeedReport sr;
      sr.dir = sd;
      sr.seed = static_cast<std::uint64_t>(parse_int(sd.filename().string().substr(5), "report: seed directory"));
      if (std::ifstream st(sd / "status"); st) {
        std::string word;
        st >> word;
        sr.failed = word == "failed";
      }
      const std::vector<EpisodeRecord> eps = read_episodes((sd / "episodes.csv").string());
      sr.tasks = metrics::summarize(eps);
      sr.aggregate = metrics::aggregate_tasks(sr.tasks);
      if (write_curves) write_curve(sd / "curve.csv", eps);
      if (sr.failed) ++ar.failed_seeds;
      ar.seeds.push_back(std::move(sr));
    }
  }

  Report rep;
  for (auto& [name, ar] : by_alg) {
    std::vector<double> fr, nf, tc, sc;
    for (const auto& s : ar.seeds) {
      if (s.failed) continue;
      fr.push_back(s.aggregate.final_reward);
      tc.push_back(s.aggregate.total_cost);
      if (s.aggregate.normalized_forgetting) nf.push_back(*s.aggregate.normalized_forgetting);
      if (s.aggregate.success_rate) sc.push_back(*s.aggregate.success_rate);
    }
    ar.final_reward = metrics::mean_std(fr);
    ar.normalized_forgetting = metrics::mean_std(nf);
    ar.total_cost = metrics::mean_std(tc);
    ar.success_rate = metrics::mean_std(sc);
    if (!ar.seeds.empty()) rep.algorithms.push_back(std::move(ar));
  }
  if (rep.algorithms.empty()) throw ConfigError("report: no runs found under " + root.string());
  return rep;
}

inline void write_report_csv(const std::filesystem::path& path, const Report& rep) {
  std::ofstream out(path);
  out << "algorithm,seeds,failed_seeds,final_reward_mean,final_reward_std,normalized_forgetting_mean,"
         "normalized_forgetting_std,total_cost_mean,total_cost_std,success_rate_mean,success_rate_std\n";
  for (const auto& a : rep.algorithms) {
    const auto cell = [](const metrics::MeanStd& m) {
      return m.n == 0 ? std::string(",") : fmt_double(m.mean) + "," + fmt_double(m.std);
    };
    out << a.algorithm << ',' << a.seeds.size() << ',' << a.failed_seeds << ',' << cell(a.final_reward) << ','
        << cell(a.normalized_forgetting) << ',' << cell(a.total_cost) << ',' << cell(a.success_rate) << '\n';
  }
}

inline void print_report(std::ostream& out, const Report& rep) {
  const auto pm = [](const metrics::MeanStd& m) {
    if (m.n == 0) return std::string("n/a");
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << m.mean << " +- " << m.std;
    return o.str();
  };
  out << std::left << std::setw(10) << "algorithm" << std::setw(7) << "seeds" << std::setw(24) << "final_reward"
      << std::setw(24) << "norm_forgetting" << std::setw(26) << "total_cost" << "success_rate\n";
  for (const auto& a : rep.algorithms) {
    out << std::left << std::setw(10) << a.algorithm << std::setw(7) << a.seeds.size() - a.failed_seeds
        << std::setw(24) << pm(a.final_reward) << std::setw(24) << pm(a.normalized_forgetting) << std::setw(26)
        << pm(a.total_cost) << pm(a.success_rate) << '\n';
  }
}

}  // namespace lifeline::harness
