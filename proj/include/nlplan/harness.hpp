#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlplan/llm.hpp"
#include "nlplan/plan.hpp"

namespace nlplan::harness {

/// Experiment settings, read from `key = value` text:
///   mission_count, cancel_fraction, cancel_delay, seed, repetitions,
///   variant (comma-separated: classic, FI, NRI, NCI, NRNCI),
///   retrieval_k, parse_retry, replan_limit, map, graph,
///   backend, http.url, http.endpoint, http.timeout_ms, scripted.delay_s
/// Relative map/graph paths resolve against the config file's directory.
struct ExperimentConfig {
  std::size_t mission_count{6};
  double cancel_fraction{0.5};
  double cancel_delay{10.0};  // simulated seconds after mission start
  std::uint64_t seed{42};
  std::size_t repetitions{1};
  std::vector<std::string> variants{"FI"};
  std::size_t retrieval_k{10};
  int parse_retry{2};
  int replan_limit{3};
  llm::BackendConfig backend;
  std::string map_file;    // default apartment map when empty
  std::string graph_file;  // default apartment graph when empty

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

ExperimentConfig experiment_config_from(const std::map<std::string, std::string>& kv,
                                        const std::string& base_dir = "");
ExperimentConfig load_experiment_config(const std::string& path);

/// "classic", "merlin2" and "merlin2-classic" name the classical pipeline.
bool is_classic(const std::string& variant);
/// Canonical spelling: "classic" or FI/NRI/NCI/NRNCI. Throws on anything else.
std::string canonical_variant(const std::string& variant);

struct MissionSpec {
  GoalPredicate goal;
  bool cancel{false};
};

/// `mission_count` greeted(p) goals drawn uniformly with replacement from
/// `persons`, exactly round(mission_count * cancel_fraction) of them flagged
/// for cancellation at shuffled positions. Deterministic in `seed`.
std::vector<MissionSpec> generate_missions(const ExperimentConfig& config, const std::vector<std::string>& persons,
                                           std::uint64_t seed);
std::vector<MissionSpec> generate_missions(const ExperimentConfig& config);

struct MissionRecord {
  std::size_t repetition{0};
  std::size_t index{0};
  GoalPredicate goal;
  std::string outcome;  // succeeded | failed | canceled
  bool cancel_requested{false};
  /// The deadline was reached while the mission was still running.
  bool cancel_fired{false};
  double sim_seconds{0.0};
  double backend_seconds{0.0};
  double elapsed{0.0};  // sim_seconds + backend_seconds
  double distance{0.0};
  std::size_t planning_rounds{0};
  std::vector<ActionCall> executed;
  std::string failure_reason;
  std::string trace;  // JSON lines
};

struct Aggregate {
  std::size_t n{0};
  double mean{0.0};
  std::optional<double> std_dev;  // sample formula; absent when n < 2
  double min{0.0};
  double max{0.0};
  double sum{0.0};
};

Aggregate aggregate(const std::vector<double>& values);

struct ExperimentReport {
  std::string variant;
  std::uint64_t seed{0};
  std::vector<MissionRecord> records;
  Aggregate mission_time;
  Aggregate mission_distance;
  /// Totals of each repetition of the whole mission list.
  Aggregate execution_time;
  Aggregate execution_distance;

  bool any_failed() const;
  std::size_t count(const std::string& outcome) const;
  std::size_t cancel_requested() const;
  std::size_t cancel_fired() const;
};

/// Runs every repetition of the mission list through one pipeline. The
/// graph and simulator persist across the missions of a repetition and are
/// reset between repetitions. With `backend` null an LLM variant builds the
/// backend from the config (the scripted oracle or an HTTP client).
ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& variant,
                                llm::Backend* backend = nullptr);

std::string report_csv(const ExperimentReport& report);
std::string report_markdown(const ExperimentReport& report);
/// Side-by-side table of several reports: one column per variant under each metric.
std::string comparison_markdown(const std::vector<ExperimentReport>& reports);

/// Writes report.csv, report.md and trace/<mission>.jsonl under `dir`.
/// Throws std::runtime_error on I/O failure.
void emit_report(const ExperimentReport& report, const std::string& dir);

/// Shortest decimal that round-trips to the same double.
std::string format_number(double value);

}  // namespace nlplan::harness
