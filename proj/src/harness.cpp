#include "nlplan/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nlplan/classic.hpp"
#include "nlplan/llmplanner.hpp"
#include "nlplan/scenario.hpp"
#include "nlplan/sim.hpp"

namespace nlplan::harness {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw std::invalid_argument(key + ": '" + text + "' is not a valid number");
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

}  // namespace

bool is_classic(const std::string& variant) {
  const auto v = lower(variant);
  return v == "classic" || v == "merlin2" || v == "merlin2-classic";
}

std::string canonical_variant(const std::string& variant) {
  if (is_classic(variant)) return "classic";
  return planner::to_string(planner::parse_variant(variant));
}

void ExperimentConfig::validate() const {
  if (mission_count < 1) throw std::invalid_argument("mission_count must be >= 1");
  if (!(cancel_fraction >= 0.0 && cancel_fraction <= 1.0)) throw std::invalid_argument("cancel_fraction must be in [0, 1]");
  if (!(cancel_delay > 0.0) || !std::isfinite(cancel_delay)) throw std::invalid_argument("cancel_delay must be > 0");
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (variants.empty()) throw std::invalid_argument("no variant selected");
  for (const auto& v : variants) canonical_variant(v);
  if (retrieval_k < 1) throw std::invalid_argument("retrieval_k must be >= 1");
  if (parse_retry < 0 || replan_limit < 0) throw std::invalid_argument("retry limits must be >= 0");
  if (backend.scripted_delay_s < 0.0) throw std::invalid_argument("scripted.delay_s must be >= 0");
}

ExperimentConfig experiment_config_from(const std::map<std::string, std::string>& kv, const std::string& base_dir) {
  static const std::set<std::string> known{
      "mission_count", "cancel_fraction", "cancel_delay", "seed",     "repetitions",     "variant",
      "retrieval_k",   "parse_retry",     "replan_limit", "map",      "graph",           "backend",
      "http.url",      "http.endpoint",   "http.timeout_ms",          "scripted.delay_s"};
  for (const auto& [key, value] : kv) {
    if (known.count(key) == 0) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto resolve = [&](const std::string& path) {
    if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base_dir) / path).string();
  };
  if (auto* v = get("mission_count")) c.mission_count = parse_number<std::size_t>("mission_count", *v);
  if (auto* v = get("cancel_fraction")) c.cancel_fraction = parse_number<double>("cancel_fraction", *v);
  if (auto* v = get("cancel_delay")) c.cancel_delay = parse_number<double>("cancel_delay", *v);
  if (auto* v = get("seed")) c.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto* v = get("repetitions")) c.repetitions = parse_number<std::size_t>("repetitions", *v);
  if (auto* v = get("variant")) {
    c.variants.clear();
    for (const auto& name : split_list(*v)) c.variants.push_back(canonical_variant(name));
  }
  if (auto* v = get("retrieval_k")) c.retrieval_k = parse_number<std::size_t>("retrieval_k", *v);
  if (auto* v = get("parse_retry")) c.parse_retry = parse_number<int>("parse_retry", *v);
  if (auto* v = get("replan_limit")) c.replan_limit = parse_number<int>("replan_limit", *v);
  if (auto* v = get("map")) c.map_file = resolve(*v);
  if (auto* v = get("graph")) c.graph_file = resolve(*v);
  c.backend = llm::backend_config_from(kv);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto c = experiment_config_from(llm::parse_key_values(buf.str()), fs::path(path).parent_path().string());
  llm::apply_env_overrides(c.backend);
  return c;
}

std::vector<MissionSpec> generate_missions(const ExperimentConfig& config, const std::vector<std::string>& persons,
                                           std::uint64_t seed) {
  if (persons.empty()) throw std::invalid_argument("no persons to greet");
  // Modulo reduction and a hand-rolled shuffle keep the sequence identical
  // across standard libraries.
  std::mt19937_64 rng(seed);
  std::vector<MissionSpec> missions;
  missions.reserve(config.mission_count);
  for (std::size_t i = 0; i < config.mission_count; ++i) {
    missions.push_back({{"greeted", {persons[rng() % persons.size()]}}, false});
  }
  std::vector<std::size_t> order(config.mission_count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto cancels = static_cast<std::size_t>(std::llround(static_cast<double>(config.mission_count) * config.cancel_fraction));
  for (std::size_t i = 0; i < cancels; ++i) missions[order[i]].cancel = true;
  return missions;
}

std::vector<MissionSpec> generate_missions(const ExperimentConfig& config) {
  return generate_missions(config, scenario::persons(), config.seed);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  a.min = *std::min_element(values.begin(), values.end());
  a.max = *std::max_element(values.begin(), values.end());
  for (double v : values) a.sum += v;
  a.mean = a.sum / static_cast<double>(a.n);
  if (a.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std_dev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

bool ExperimentReport::any_failed() const { return count("failed") != 0; }

std::size_t ExperimentReport::count(const std::string& outcome) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const MissionRecord& r) { return r.outcome == outcome; }));
}

std::size_t ExperimentReport::cancel_requested() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const MissionRecord& r) { return r.cancel_requested; }));
}

std::size_t ExperimentReport::cancel_fired() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const MissionRecord& r) { return r.cancel_fired; }));
}

namespace {

std::vector<std::string> persons_of(const kg::KnowledgeGraph& graph) {
  std::vector<std::string> out;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.node_class == "person") out.push_back(id);
  }
  return out;
}

// Mission-scoped marker: an earlier greeting of the same person must not
// satisfy this mission's goal.
void clear_greeted(kg::KnowledgeGraph& graph, const std::string& person) {
  for (const auto& e : graph.match({std::nullopt, std::string("greeted"), person})) graph.remove_edge(e.key());
}

struct ClassicOutcome {
  std::string outcome;
  std::string failure_reason;
  std::vector<ActionCall> executed;
  std::string trace;
};

ClassicOutcome run_classic(kg::KnowledgeGraph& graph, sim::Simulator& simulator, const GoalPredicate& goal,
                           const fsm::CancellationToken& token) {
  ClassicOutcome out;
  Plan plan;
  try {
    const auto& domain = classic::greeting_domain();
    plan = classic::plan(domain, classic::graph_to_problem(graph, goal, domain));
  } catch (const std::exception& e) {
    out.outcome = fsm::kFailed;
    out.failure_reason = e.what();
    return out;
  }
  out.trace += nlohmann::json{{"kind", "plan"}, {"plan", nlohmann::json::parse(to_plan_json(plan))["plan"]}}.dump() + "\n";
  out.outcome = fsm::kSucceeded;
  for (const auto& step : plan.steps) {
    if (token.is_canceled()) {
      out.outcome = fsm::kCanceled;
      break;
    }
    try {
      if (simulator.execute(graph, step, token).canceled) {
        out.outcome = fsm::kCanceled;
        break;
      }
    } catch (const std::exception& e) {
      out.outcome = fsm::kFailed;
      out.failure_reason = to_sexpr(step) + ": " + e.what();
      break;
    }
    out.executed.push_back(step);
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const std::string& variant, llm::Backend* backend) {
  config.validate();
  ExperimentReport report;
  report.variant = canonical_variant(variant);
  report.seed = config.seed;
  const bool classic_pipeline = report.variant == "classic";

  const auto map = config.map_file.empty() ? sim::default_map() : sim::load_map_file(config.map_file);
  const auto initial = config.graph_file.empty() ? scenario::apartment_graph(map) : kg::load_graph_file(config.graph_file);
  const auto persons = persons_of(initial);

  planner::LayerConfig layer;
  if (!classic_pipeline) {
    layer.variant = planner::parse_variant(report.variant);
    layer.retrieval_k = config.retrieval_k;
    layer.parse_retry = config.parse_retry;
    layer.replan_limit = config.replan_limit;
  }

  std::vector<double> exec_time, exec_distance;
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    kg::KnowledgeGraph graph = initial;
    auto simulator = sim::Simulator::from_graph(map, graph);

    // The oracle reads the live graph, so it is rebuilt with each repetition's graph.
    std::unique_ptr<llm::Backend> owned;
    llm::Backend* active = backend;
    if (!classic_pipeline && active == nullptr) {
      if (config.backend.backend == "http") {
        owned = std::make_unique<llm::HttpBackend>(config.backend.http);
      } else {
        auto oracle = planner::make_oracle_backend(graph);
        oracle->set_call_delay(config.backend.scripted_delay_s);
        owned = std::move(oracle);
      }
      active = owned.get();
    }

    const auto missions = generate_missions(config, persons, config.seed + rep);
    double rep_time = 0.0;
    double rep_distance = 0.0;
    for (std::size_t i = 0; i < missions.size(); ++i) {
      const auto& mission = missions[i];
      MissionRecord record;
      record.repetition = rep;
      record.index = i;
      record.goal = mission.goal;
      record.cancel_requested = mission.cancel;

      fsm::CancellationToken token;
      clear_greeted(graph, mission.goal.args.front());
      const auto start = simulator.metrics();
      const auto first_event = simulator.event_log().size();
      if (mission.cancel) simulator.arm_deadline(start.elapsed + config.cancel_delay, token);

      try {
        if (classic_pipeline) {
          auto result = run_classic(graph, simulator, mission.goal, token);
          record.outcome = result.outcome;
          record.failure_reason = result.failure_reason;
          record.executed = std::move(result.executed);
          record.planning_rounds = 1;
          record.trace = std::move(result.trace);
        } else {
          auto goal = planner::make_goal(mission.goal);
          auto result = planner::run_layer(graph, goal, *active, simulator, layer, token);
          record.outcome = result.outcome;
          record.failure_reason = result.trace.failure_reason;
          record.executed = result.trace.executed;
          record.planning_rounds = result.trace.planning_rounds;
          record.backend_seconds = result.trace.backend_seconds;
          record.trace = result.trace.to_json_lines();
        }
      } catch (const std::exception& e) {
        record.outcome = fsm::kFailed;
        record.failure_reason = e.what();
      }
      record.cancel_fired = mission.cancel && simulator.deadline_fired();
      simulator.disarm_deadline();

      const auto end = simulator.metrics();
      record.sim_seconds = end.elapsed - start.elapsed;
      record.distance = end.traveled - start.traveled;
      record.elapsed = record.sim_seconds + record.backend_seconds;
      for (std::size_t e = first_event; e < simulator.event_log().size(); ++e) {
        const auto& ev = simulator.event_log()[e];
        record.trace += nlohmann::json{{"kind", "sim"},          {"action", ev.call.action}, {"args", ev.call.args},
                                       {"t_start", ev.t_start},  {"t_end", ev.t_end},        {"distance", ev.distance},
                                       {"canceled", ev.canceled}, {"robot_room", ev.robot_room}}
                            .dump() +
                        "\n";
      }
      record.trace += nlohmann::json{{"kind", "mission"},
                                     {"goal", "(" + record.goal.name + " " + record.goal.args.front() + ")"},
                                     {"outcome", record.outcome},
                                     {"cancel_requested", record.cancel_requested},
                                     {"cancel_fired", record.cancel_fired},
                                     {"elapsed", record.elapsed},
                                     {"distance", record.distance}}
                          .dump() +
                      "\n";
      rep_time += record.elapsed;
      rep_distance += record.distance;
      report.records.push_back(std::move(record));
    }
    exec_time.push_back(rep_time);
    exec_distance.push_back(rep_distance);
  }

  std::vector<double> times, distances;
  for (const auto& r : report.records) {
    times.push_back(r.elapsed);
    distances.push_back(r.distance);
  }
  report.mission_time = aggregate(times);
  report.mission_distance = aggregate(distances);
  report.execution_time = aggregate(exec_time);
  report.execution_distance = aggregate(exec_distance);
  return report;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

namespace {

std::string fixed3(double value) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << value;
  return out.str();
}

struct Row {
  const char* label;
  const char* key;
  std::optional<double> (*pick)(const Aggregate&);
};

const Row kRows[] = {
    {"Mean", "mean", [](const Aggregate& a) -> std::optional<double> { return a.mean; }},
    {"Std. Deviation", "std_deviation", [](const Aggregate& a) { return a.std_dev; }},
    {"Minimum", "minimum", [](const Aggregate& a) -> std::optional<double> { return a.min; }},
    {"Maximum", "maximum", [](const Aggregate& a) -> std::optional<double> { return a.max; }},
    {"Sum", "sum", [](const Aggregate& a) -> std::optional<double> { return a.sum; }},
};

std::string csv_block(const char* name, const Aggregate& time, const Aggregate& distance) {
  std::string out = std::string("statistic,") + name + "_time_s," + name + "_distance_m\n";
  for (const auto& row : kRows) {
    auto t = row.pick(time);
    auto d = row.pick(distance);
    out += std::string(row.key) + "," + (t ? format_number(*t) : "n/a") + "," + (d ? format_number(*d) : "n/a") + "\n";
  }
  return out;
}

std::string md_cell(std::optional<double> v) { return v ? fixed3(*v) : "n/a"; }

std::string md_table(const std::vector<std::string>& columns, const std::vector<const Aggregate*>& time,
                     const std::vector<const Aggregate*>& distance) {
  const auto n = columns.size();
  std::string out = "| |";
  for (std::size_t i = 0; i < n; ++i) out += " Execution Time (Seconds)" + (n > 1 ? " " + columns[i] : "") + " |";
  for (std::size_t i = 0; i < n; ++i) out += " Traveled Distance (Meters)" + (n > 1 ? " " + columns[i] : "") + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < 2 * n; ++i) out += "---:|";
  out += "\n";
  for (const auto& row : kRows) {
    out += std::string("| ") + row.label + " |";
    for (const auto* a : time) out += " " + md_cell(row.pick(*a)) + " |";
    for (const auto* a : distance) out += " " + md_cell(row.pick(*a)) + " |";
    out += "\n";
  }
  return out;
}

}  // namespace

std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "repetition,mission,goal,cancel_requested,cancel_fired,outcome,planning_rounds,sim_seconds,backend_seconds,"
      "elapsed_seconds,distance_m\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.repetition + 1) + "," + std::to_string(r.index + 1) + "," + r.goal.name + " " +
           r.goal.args.front() + "," + (r.cancel_requested ? "1" : "0") + "," + (r.cancel_fired ? "1" : "0") + "," +
           r.outcome + "," + std::to_string(r.planning_rounds) + "," + format_number(r.sim_seconds) + "," +
           format_number(r.backend_seconds) + "," + format_number(r.elapsed) + "," + format_number(r.distance) + "\n";
  }
  out += "\n" + csv_block("mission", report.mission_time, report.mission_distance);
  out += "\n" + csv_block("execution", report.execution_time, report.execution_distance);
  return out;
}

std::string report_markdown(const ExperimentReport& report) {
  const auto reps = report.execution_time.n;
  const auto missions = reps == 0 ? 0 : report.records.size() / reps;
  std::string out = "# Experiment report: " + report.variant + "\n\n";
  out += std::to_string(missions) + " missions per execution, " + std::to_string(reps) + " execution" +
         (reps == 1 ? "" : "s") + ", seed " + std::to_string(report.seed) + ".\n";
  out += "Outcomes: " + std::to_string(report.count("succeeded")) + " succeeded, " +
         std::to_string(report.count("canceled")) + " canceled, " + std::to_string(report.count("failed")) +
         " failed. Cancellation requested for " + std::to_string(report.cancel_requested()) + " missions; " +
         std::to_string(report.cancel_fired()) + " were still running at the deadline.\n\n";
  out += "## Per execution\n\n" + md_table({report.variant}, {&report.execution_time}, {&report.execution_distance});
  out += "\n## Per mission\n\n" + md_table({report.variant}, {&report.mission_time}, {&report.mission_distance});
  return out;
}

std::string comparison_markdown(const std::vector<ExperimentReport>& reports) {
  std::vector<std::string> names;
  std::vector<const Aggregate*> et, ed, mt, md;
  for (const auto& r : reports) {
    names.push_back(r.variant == "classic" ? "MERLIN2" : r.variant);
    et.push_back(&r.execution_time);
    ed.push_back(&r.execution_distance);
    mt.push_back(&r.mission_time);
    md.push_back(&r.mission_distance);
  }
  std::string out = "# Variant comparison\n\n## Per execution\n\n" + md_table(names, et, ed);
  out += "\n## Per mission\n\n" + md_table(names, mt, md);
  return out;
}

void emit_report(const ExperimentReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "trace", ec);
  if (ec) throw std::runtime_error("cannot create '" + dir + "/trace': " + ec.message());
  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
  };
  write(fs::path(dir) / "report.csv", report_csv(report));
  write(fs::path(dir) / "report.md", report_markdown(report));
  for (const auto& r : report.records) {
    char name[64];
    std::snprintf(name, sizeof name, "r%02zu_m%03zu.jsonl", r.repetition + 1, r.index + 1);
    write(fs::path(dir) / "trace" / name, r.trace);
  }
}

}  // namespace nlplan::harness
