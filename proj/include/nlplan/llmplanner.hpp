#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nlplan/fsm.hpp"
#include "nlplan/kgraph.hpp"
#include "nlplan/llm.hpp"
#include "nlplan/plan.hpp"
#include "nlplan/sim.hpp"
#include "nlplan/worldstate.hpp"

namespace nlplan::planner {

struct Goal {
  GoalPredicate predicate;
  std::string nl_text;
};

/// greeted(p) -> "greet the person p". Other predicates render as
/// "make <name> hold for <args>".
std::string goal_text(const GoalPredicate& predicate);
Goal make_goal(GoalPredicate predicate);
/// Accepts "greet angel", "greet the person angel", "greeted angel" and
/// "(greeted angel)".
Goal parse_goal(std::string_view text);

/// Edge over action parameters; a term starting with '?' is a parameter,
/// anything else a node id.
struct EdgeTemplate {
  std::string source;
  std::string relation;
  std::string target;
};

struct ActionParam {
  std::string name;        // "?r"
  std::string node_class;  // "robot"
};

struct ActionSpec {
  std::string name;
  std::vector<ActionParam> params;
  std::string description;
  std::vector<EdgeTemplate> precondition;
  std::vector<EdgeTemplate> add;
  std::vector<EdgeTemplate> remove;
};

class PlanError : public std::runtime_error {
 public:
  enum class Kind { MalformedJson, SchemaMismatch, UnknownAction, ArityMismatch, UnknownObject };

  PlanError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(PlanError::Kind kind);

class ActionRegistry {
 public:
  /// Throws std::invalid_argument on a duplicate name or a template that
  /// uses an undeclared parameter.
  void add(ActionSpec spec);
  const ActionSpec* find(std::string_view name) const;
  const std::vector<ActionSpec>& specs() const { return specs_; }
  bool empty() const { return specs_.empty(); }

  /// Name and arity check.
  void validate(const ActionCall& call) const;
  /// validate() plus: every argument is a node of the parameter's class.
  void validate(const ActionCall& call, const kg::KnowledgeGraph& graph) const;

 private:
  std::vector<ActionSpec> specs_;
};

/// navigate(?r robot, ?from room, ?to room) and greet(?r robot, ?p person, ?w room).
const ActionRegistry& greeting_registry();

/// "{name}" placeholders filled in one pass; braces that do not name a
/// supplied value are left as they are.
std::string render_template(std::string_view tpl, const std::vector<std::pair<std::string, std::string>>& values);

struct PromptTemplates {
  std::string planning;    // {actions} {world_state} {goal} {feedback}
  std::string goal_check;  // {world_state} {goal}
  std::string feedback;    // {rationale}

  static const PromptTemplates& builtin();
  /// Reads planning.txt, goal_check.txt and feedback.txt from `dir`.
  static PromptTemplates load(const std::string& dir);
};

/// "navigate(robot: robot, from: room, to: room) - <description>"
std::string action_line(const ActionSpec& spec);

std::string build_planning_prompt(const ActionRegistry& registry, const ws::WorldState& world_state, const Goal& goal,
                                  const std::optional<std::string>& feedback,
                                  const PromptTemplates& templates = PromptTemplates::builtin());
std::string build_goal_check_prompt(const ws::WorldState& world_state, const Goal& goal,
                                    const PromptTemplates& templates = PromptTemplates::builtin());

/// {"plan":[{"action":"<name>","args":["<id>",...]},...]}, checked against
/// the registry (names and arity).
Plan parse_plan(std::string_view text, const ActionRegistry& registry);

struct GoalCheckResult {
  bool achieved{false};
  std::string rationale;
};

/// {"achieved": bool, "rationale": "<text>"}; the rationale must be
/// non-empty when achieved is false.
GoalCheckResult parse_goal_check(std::string_view text);

inline constexpr std::string_view kUnparseableCheck = "goal check unparseable";

struct CheckOptions {
  int max_tokens{256};
  double temperature{0.0};
  std::optional<std::int64_t> seed;
};

struct Generation {
  std::string purpose;  // "plan" or "check"
  std::string prompt;
  std::string response;
  double latency_seconds{0.0};
  std::string error;  // parse or grammar error, empty when accepted
};

/// Asks the backend once, retrying once on unparseable output. Two failures
/// give achieved=false with rationale "goal check unparseable". Backend
/// errors other than grammar violations propagate.
GoalCheckResult check_goal(llm::Backend& backend, const ws::WorldState& world_state, const Goal& goal,
                           const CheckOptions& options = {}, std::vector<Generation>* log = nullptr,
                           const PromptTemplates& templates = PromptTemplates::builtin());

enum class Variant { FI, NRI, NCI, NRNCI };

bool uses_rag(Variant v);
bool uses_goal_check(Variant v);
const char* to_string(Variant v);
/// "FI", "NRI", "NCI", "NRNCI" (case-insensitive).
Variant parse_variant(std::string_view text);

struct LayerConfig {
  Variant variant{Variant::FI};
  std::size_t retrieval_k{10};
  int parse_retry{2};
  int replan_limit{3};
  int plan_max_tokens{512};
  int check_max_tokens{256};
  double temperature{0.0};
  std::optional<std::int64_t> seed;
  /// Embedder for retrieval; the backend's own embeddings when null.
  const ws::Embedder* embedder{nullptr};

  /// Throws std::invalid_argument on negative limits or k == 0 with RAG.
  void validate() const;
};

struct MissionTrace {
  std::vector<Generation> generations;
  std::vector<Plan> plans;  // accepted plan of each planning round
  std::vector<GoalCheckResult> checks;
  std::vector<ActionCall> executed;
  std::size_t planning_rounds{0};
  double backend_seconds{0.0};
  fsm::Trace states;
  std::string failure_reason;

  std::size_t generate_calls(std::string_view purpose) const;
  /// JSON lines: one "state" record per FSM step, then one per generation,
  /// plan, check and executed action.
  std::string to_json_lines() const;
};

struct LayerResult {
  std::string outcome;  // succeeded | failed | canceled
  MissionTrace trace;
};

/// The planning layer: PLANNING (world state, prompt, generation, parsing
/// with retries) -> EXECUTING_PLAN -> CHECKING_GOAL (check variants only),
/// replanning with the check's rationale until the goal holds or the replan
/// limit is spent. The graph is updated by the executor as actions run.
LayerResult run_layer(kg::KnowledgeGraph& graph, const Goal& goal, llm::Backend& backend,
                      sim::ActionExecutor& executor, const LayerConfig& config, const fsm::CancellationToken& token,
                      const ActionRegistry& registry = greeting_registry(),
                      const PromptTemplates& templates = PromptTemplates::builtin());

/// Scripted backend that answers planning prompts with the classical
/// planner's plan for the live graph and goal-check prompts by looking up
/// the greeted edge. `graph` must outlive the backend.
std::unique_ptr<llm::ScriptedBackend> make_oracle_backend(const kg::KnowledgeGraph& graph);

/// Goal parsed from the "Goal: " line of a prompt, if any.
std::optional<Goal> goal_from_prompt(std::string_view prompt);

}  // namespace nlplan::planner
