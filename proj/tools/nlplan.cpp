// nlplan: command-line front end for the planning engine.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nlplan/classic.hpp"
#include "nlplan/harness.hpp"
#include "nlplan/kgraph.hpp"
#include "nlplan/llmplanner.hpp"
#include "nlplan/scenario.hpp"
#include "nlplan/sim.hpp"
#include "nlplan/worldstate.hpp"

namespace {

using namespace nlplan;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

sim::WorldMap map_or_default(const std::string& path) {
  return path.empty() ? sim::default_map() : sim::load_map_file(path);
}

kg::KnowledgeGraph graph_or_default(const std::string& path, const sim::WorldMap& map) {
  return path.empty() ? scenario::apartment_graph(map) : kg::load_graph_file(path);
}

int cmd_graph_export(const std::string& out, const std::string& map_file) {
  const auto graph = scenario::apartment_graph(map_or_default(map_file));
  if (out.empty() || out == "-") {
    std::cout << kg::to_json(graph) << "\n";
  } else {
    kg::save_graph_file(graph, out);
  }
  return 0;
}

int cmd_graph_import(const std::string& file) {
  const auto graph = kg::load_graph_file(file);
  std::cout << file << ": " << graph.node_count() << " nodes, " << graph.edge_count() << " edges\n";
  return 0;
}

int cmd_worldstate(const std::string& file, const std::string& goal, std::size_t k) {
  const auto graph = kg::load_graph_file(file);
  ws::HashingEmbedder embedder;
  const auto mode = goal.empty() ? ws::WorldStateMode::full() : ws::WorldStateMode::retrieved(k);
  const auto text = goal.empty() ? std::string() : planner::parse_goal(goal).nl_text;
  for (const auto& item : ws::build_world_state(graph, text, mode, embedder).items) std::cout << item << "\n";
  return 0;
}

int cmd_classic(const std::string& domain_file, const std::string& problem_file, const std::string& graph_file,
                const std::string& goal_text) {
  classic::Domain domain;
  classic::Problem problem;
  if (!graph_file.empty()) {
    domain = domain_file.empty() ? classic::greeting_domain() : classic::parse_domain(read_file(domain_file), domain_file);
    problem = classic::graph_to_problem(kg::load_graph_file(graph_file), classic::parse_goal_atom(goal_text), domain);
  } else {
    domain = classic::parse_domain(read_file(domain_file), domain_file);
    problem = classic::parse_problem(read_file(problem_file), domain, problem_file);
  }
  for (const auto& step : classic::plan(domain, problem).steps) std::cout << to_sexpr(step) << "\n";
  return 0;
}

struct SolveArgs {
  std::string goal;
  std::string variant{"FI"};
  std::string backend{"scripted"};
  std::string config;
  std::string url;
  std::string graph;
  std::string map;
  std::string trace;
  std::size_t k{10};
};

int cmd_solve(const SolveArgs& args) {
  llm::BackendConfig backend_config;
  if (!args.config.empty()) backend_config = llm::load_backend_config(args.config);
  backend_config.backend = args.backend;
  llm::apply_env_overrides(backend_config);
  if (!args.url.empty()) backend_config.http.url = args.url;

  const auto map = map_or_default(args.map);
  auto graph = graph_or_default(args.graph, map);
  auto simulator = sim::Simulator::from_graph(map, graph);
  const auto goal = planner::parse_goal(args.goal);

  std::unique_ptr<llm::Backend> backend;
  if (backend_config.backend == "http") {
    backend = std::make_unique<llm::HttpBackend>(backend_config.http);
  } else if (backend_config.backend == "scripted") {
    auto oracle = planner::make_oracle_backend(graph);
    oracle->set_call_delay(backend_config.scripted_delay_s);
    backend = std::move(oracle);
  } else {
    throw std::invalid_argument("unknown backend '" + backend_config.backend + "'");
  }

  planner::LayerConfig config;
  config.variant = planner::parse_variant(args.variant);
  config.retrieval_k = args.k;
  // Retrieval needs embeddings; a server without an embedding endpoint
  // would fail every mission, so HTTP runs use the local embedder.
  ws::HashingEmbedder local_embedder;
  if (backend_config.backend == "http") config.embedder = &local_embedder;

  fsm::CancellationToken token;
  const auto result = planner::run_layer(graph, goal, *backend, simulator, config, token);

  if (!args.trace.empty()) {
    std::ofstream out(args.trace);
    out << result.trace.to_json_lines();
  }
  for (const auto& plan : result.trace.plans) std::cout << to_plan_json(plan) << "\n";
  const auto m = simulator.metrics();
  std::cout << "outcome: " << result.outcome << "\n"
            << "planning rounds: " << result.trace.planning_rounds << "\n"
            << "simulated time: " << harness::format_number(m.elapsed) << " s\n"
            << "traveled distance: " << harness::format_number(m.traveled) << " m\n"
            << "backend time: " << harness::format_number(result.trace.backend_seconds) << " s\n";
  if (result.outcome != fsm::kSucceeded) {
    std::cerr << "error: " << result.trace.failure_reason << "\n";
    return 1;
  }
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir) {
  const auto config = harness::load_experiment_config(config_path);
  std::vector<harness::ExperimentReport> reports;
  bool failed = false;
  for (const auto& variant : config.variants) {
    auto report = harness::run_experiment(config, variant);
    const auto dir = config.variants.size() == 1 ? out_dir : out_dir + "/" + report.variant;
    harness::emit_report(report, dir);
    std::cout << report.variant << ": " << report.count("succeeded") << " succeeded, " << report.count("canceled")
              << " canceled, " << report.count("failed") << " failed -> " << dir << "\n";
    failed = failed || report.any_failed();
    reports.push_back(std::move(report));
  }
  if (reports.size() > 1) {
    std::ofstream out(out_dir + "/summary.md");
    out << harness::comparison_markdown(reports);
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-driven task planning with a classical baseline and a mission simulator"};
  app.require_subcommand(1);

  auto* graph = app.add_subcommand("graph", "Knowledge graph files");
  graph->require_subcommand(1);
  std::string export_out, export_map, import_file;
  auto* graph_export = graph->add_subcommand("export", "Write the apartment graph");
  graph_export->add_option("file", export_out, "Output file (.json for JSON, otherwise the line format)");
  graph_export->add_option("--map", export_map, "Map file supplying room waypoints");
  auto* graph_import = graph->add_subcommand("import", "Load and validate a graph file");
  graph_import->add_option("file", import_file)->required()->check(CLI::ExistingFile);

  auto* worldstate = app.add_subcommand("worldstate", "Knowledge items of a graph");
  worldstate->require_subcommand(1);
  auto* render = worldstate->add_subcommand("render", "Print the world state");
  std::string ws_file, ws_goal;
  std::size_t ws_k = 10;
  render->add_option("graph", ws_file)->required()->check(CLI::ExistingFile);
  render->add_option("--goal", ws_goal, "Retrieve the items closest to this goal instead of all items");
  render->add_option("--k", ws_k, "Number of retrieved items")->check(CLI::PositiveNumber);

  auto* classic_cmd = app.add_subcommand("classic", "Classical planner");
  classic_cmd->require_subcommand(1);
  auto* classic_plan = classic_cmd->add_subcommand("plan", "Plan with breadth-first search");
  std::string domain_file, problem_file, from_graph, classic_goal;
  classic_plan->add_option("--domain", domain_file)->check(CLI::ExistingFile);
  auto* problem_opt = classic_plan->add_option("--problem", problem_file)->check(CLI::ExistingFile);
  auto* from_graph_opt = classic_plan->add_option("--from-graph", from_graph)->check(CLI::ExistingFile);
  auto* goal_opt = classic_plan->add_option("--goal", classic_goal, "Goal atom, e.g. \"greeted angel\"");
  problem_opt->excludes(from_graph_opt);
  from_graph_opt->needs(goal_opt);

  auto* solve = app.add_subcommand("solve", "Run the LLM planning layer for one goal");
  SolveArgs solve_args;
  solve->add_option("--goal", solve_args.goal, "e.g. \"greet angel\"")->required();
  solve->add_option("--variant", solve_args.variant, "FI, NRI, NCI or NRNCI");
  solve->add_option("--backend", solve_args.backend, "scripted or http");
  solve->add_option("--config", solve_args.config, "Backend config file")->check(CLI::ExistingFile);
  solve->add_option("--url", solve_args.url, "Inference server URL");
  solve->add_option("--graph", solve_args.graph, "Graph file")->check(CLI::ExistingFile);
  solve->add_option("--map", solve_args.map, "Map file")->check(CLI::ExistingFile);
  solve->add_option("--k", solve_args.k, "Retrieved items")->check(CLI::PositiveNumber);
  solve->add_option("--trace", solve_args.trace, "Write the mission trace (JSON lines) here");

  auto* experiment = app.add_subcommand("experiment", "Run a mission experiment");
  std::string exp_config, exp_out;
  experiment->add_option("--config", exp_config)->required()->check(CLI::ExistingFile);
  experiment->add_option("--out", exp_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (graph_export->parsed()) return cmd_graph_export(export_out, export_map);
    if (graph_import->parsed()) return cmd_graph_import(import_file);
    if (render->parsed()) return cmd_worldstate(ws_file, ws_goal, ws_k);
    if (classic_plan->parsed()) {
      if (from_graph.empty() && (domain_file.empty() || problem_file.empty())) {
        std::cerr << "error: give --domain and --problem, or --from-graph and --goal\n";
        return 2;
      }
      return cmd_classic(domain_file, problem_file, from_graph, classic_goal);
    }
    if (solve->parsed()) return cmd_solve(solve_args);
    if (experiment->parsed()) return cmd_experiment(exp_config, exp_out);
  } catch (const classic::PddlError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
