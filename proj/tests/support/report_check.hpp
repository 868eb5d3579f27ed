#pragma once

// Reads an emitted report.csv back and recomputes every aggregate from the
// per-mission rows, without using the library's statistics code.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace nlplan::report_check {

struct CsvReport {
  struct Row {
    int repetition{0};
    int mission{0};
    std::string goal;
    bool cancel_requested{false};
    bool cancel_fired{false};
    std::string outcome;
    double elapsed{0};
    double distance{0};
  };
  std::vector<Row> rows;
  // block name ("mission"/"execution") -> statistic -> (time, distance) as text
  std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>> blocks;
};

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

inline CsvReport parse_report_csv(const std::string& text) {
  CsvReport report;
  std::istringstream in(text);
  std::string line;
  std::string block;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    if (cells.size() == 3 && cells[0] == "statistic") {
      block = cells[1].substr(0, cells[1].find('_'));
      continue;
    }
    if (!block.empty()) {
      if (cells.size() == 3) report.blocks[block][cells[0]] = {cells[1], cells[2]};
      continue;
    }
    if (cells.size() != 11) continue;
    CsvReport::Row r;
    r.repetition = std::stoi(cells[0]);
    r.mission = std::stoi(cells[1]);
    r.goal = cells[2];
    r.cancel_requested = cells[3] == "1";
    r.cancel_fired = cells[4] == "1";
    r.outcome = cells[5];
    r.elapsed = std::stod(cells[9]);
    r.distance = std::stod(cells[10]);
    report.rows.push_back(r);
  }
  return report;
}

struct Stats {
  double mean{0}, min{0}, max{0}, sum{0};
  bool has_std{false};
  double std_dev{0};
};

inline Stats compute_stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.sum += x;
  s.mean = s.sum / static_cast<double>(v.size());
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.has_std = true;
    s.std_dev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

/// Empty when every statistic in both blocks matches the recomputation
/// within `tol`; otherwise a description of the first mismatch.
inline std::string check_report_csv(const CsvReport& report, double tol = 1e-9) {
  std::vector<double> mt, md;
  std::map<int, std::pair<double, double>> per_rep;
  for (const auto& r : report.rows) {
    mt.push_back(r.elapsed);
    md.push_back(r.distance);
    per_rep[r.repetition].first += r.elapsed;
    per_rep[r.repetition].second += r.distance;
  }
  std::vector<double> et, ed;
  for (const auto& [rep, totals] : per_rep) {
    et.push_back(totals.first);
    ed.push_back(totals.second);
  }
  auto check_block = [&](const std::string& name, const Stats& t, const Stats& d) -> std::string {
    auto it = report.blocks.find(name);
    if (it == report.blocks.end()) return "missing " + name + " block";
    const auto& stats = it->second;
    for (const char* key : {"mean", "std_deviation", "minimum", "maximum", "sum"}) {
      if (!stats.count(key)) return name + ": missing row " + key;
    }
    auto near = [&](const std::string& cell, double want, const std::string& what) -> std::string {
      const double got = std::stod(cell);
      return std::abs(got - want) <= tol ? "" : name + " " + what + ": file " + cell + " vs " + std::to_string(want);
    };
    for (const auto& [col, s] : {std::pair{0, t}, std::pair{1, d}}) {
      auto cell = [&](const char* key) { return col == 0 ? stats.at(key).first : stats.at(key).second; };
      for (const auto& msg : {near(cell("mean"), s.mean, "mean"), near(cell("minimum"), s.min, "minimum"),
                              near(cell("maximum"), s.max, "maximum"), near(cell("sum"), s.sum, "sum")}) {
        if (!msg.empty()) return msg;
      }
      if (s.has_std) {
        if (auto msg = near(cell("std_deviation"), s.std_dev, "std"); !msg.empty()) return msg;
      } else if (cell("std_deviation") != "n/a") {
        return name + ": std with n < 2 should be n/a";
      }
      if (!(s.min <= s.mean + tol && s.mean <= s.max + tol)) return name + ": min <= mean <= max violated";
    }
    return "";
  };
  if (auto msg = check_block("mission", compute_stats(mt), compute_stats(md)); !msg.empty()) return msg;
  return check_block("execution", compute_stats(et), compute_stats(ed));
}

inline bool markdown_has_statistic_rows(const std::string& md) {
  for (const char* label : {"| Mean |", "| Std. Deviation |", "| Minimum |", "| Maximum |", "| Sum |"}) {
    if (md.find(label) == std::string::npos) return false;
  }
  return md.find("Execution Time (Seconds)") != std::string::npos &&
         md.find("Traveled Distance (Meters)") != std::string::npos;
}

}  // namespace nlplan::report_check
