#include "nlplan/llmplanner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nlplan_embedded.hpp"

namespace nlplan::planner {

namespace {

std::vector<std::string> goal_words(std::string_view text) {
  std::vector<std::string> words;
  std::string word;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',') {
      if (!word.empty()) words.push_back(std::move(word));
      word.clear();
    } else {
      word += c;
    }
  }
  if (!word.empty()) words.push_back(std::move(word));
  return words;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string goal_text(const GoalPredicate& predicate) {
  if (predicate.name == "greeted" && predicate.args.size() == 1) return "greet the person " + predicate.args[0];
  std::string out = "make " + predicate.name + " hold";
  for (std::size_t i = 0; i < predicate.args.size(); ++i) out += (i ? ", " : " for ") + predicate.args[i];
  return out;
}

Goal make_goal(GoalPredicate predicate) {
  auto text = goal_text(predicate);
  return {std::move(predicate), std::move(text)};
}

Goal parse_goal(std::string_view text) {
  auto words = goal_words(text);
  if (words.empty()) throw std::invalid_argument("empty goal");
  for (auto& w : words) {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
  }
  if (words[0] == "greet") {
    std::size_t i = 1;
    if (i < words.size() && words[i] == "the") ++i;
    if (i < words.size() && words[i] == "person") ++i;
    if (words.size() - i != 1) throw std::invalid_argument("expected \"greet <person>\", got \"" + std::string(text) + "\"");
    return make_goal({"greeted", {words[i]}});
  }
  return make_goal({words[0], {words.begin() + 1, words.end()}});
}

std::optional<Goal> goal_from_prompt(std::string_view prompt) {
  std::size_t pos = 0;
  while (pos < prompt.size()) {
    auto end = prompt.find('\n', pos);
    if (end == std::string_view::npos) end = prompt.size();
    auto line = prompt.substr(pos, end - pos);
    if (line.starts_with("Goal: ")) {
      try {
        return parse_goal(line.substr(6));
      } catch (const std::invalid_argument&) {
        return std::nullopt;
      }
    }
    pos = end + 1;
  }
  return std::nullopt;
}

const char* to_string(PlanError::Kind kind) {
  switch (kind) {
    case PlanError::Kind::MalformedJson: return "MalformedJson";
    case PlanError::Kind::SchemaMismatch: return "SchemaMismatch";
    case PlanError::Kind::UnknownAction: return "UnknownAction";
    case PlanError::Kind::ArityMismatch: return "ArityMismatch";
    case PlanError::Kind::UnknownObject: return "UnknownObject";
  }
  return "Unknown";
}

void ActionRegistry::add(ActionSpec spec) {
  if (spec.name.empty()) throw std::invalid_argument("action without a name");
  if (find(spec.name)) throw std::invalid_argument("action '" + spec.name + "' registered twice");
  std::set<std::string> declared;
  for (const auto& p : spec.params) {
    if (!p.name.starts_with('?')) throw std::invalid_argument("parameter '" + p.name + "' must start with '?'");
    if (!declared.insert(p.name).second) throw std::invalid_argument("duplicate parameter '" + p.name + "'");
  }
  for (const auto* list : {&spec.precondition, &spec.add, &spec.remove}) {
    for (const auto& t : *list) {
      for (const auto* term : {&t.source, &t.target}) {
        if (term->starts_with('?') && declared.count(*term) == 0) {
          throw std::invalid_argument("action '" + spec.name + "' uses undeclared parameter '" + *term + "'");
        }
      }
    }
  }
  specs_.push_back(std::move(spec));
}

const ActionSpec* ActionRegistry::find(std::string_view name) const {
  for (const auto& s : specs_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void ActionRegistry::validate(const ActionCall& call) const {
  const auto* spec = find(call.action);
  if (!spec) throw PlanError(PlanError::Kind::UnknownAction, "unknown action '" + call.action + "'");
  if (spec->params.size() != call.args.size()) {
    throw PlanError(PlanError::Kind::ArityMismatch, "action '" + call.action + "' takes " +
                                                        std::to_string(spec->params.size()) + " arguments, got " +
                                                        std::to_string(call.args.size()));
  }
}

void ActionRegistry::validate(const ActionCall& call, const kg::KnowledgeGraph& graph) const {
  validate(call);
  const auto* spec = find(call.action);
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    const auto* node = graph.find_node(call.args[i]);
    if (!node) throw PlanError(PlanError::Kind::UnknownObject, "'" + call.args[i] + "' is not in the knowledge graph");
    if (node->node_class != spec->params[i].node_class) {
      throw PlanError(PlanError::Kind::UnknownObject, "'" + call.args[i] + "' is a " + node->node_class +
                                                          ", but " + call.action + " expects a " +
                                                          spec->params[i].node_class);
    }
  }
}

const ActionRegistry& greeting_registry() {
  static const ActionRegistry registry = [] {
    ActionRegistry r;
    r.add({"navigate",
           {{"?robot", "robot"}, {"?from", "room"}, {"?to", "room"}},
           "move the robot from the room it is in to another room",
           {{"?robot", "at", "?from"}},
           {{"?robot", "at", "?to"}},
           {{"?robot", "at", "?from"}}});
    r.add({"greet",
           {{"?robot", "robot"}, {"?person", "person"}, {"?room", "room"}},
           "greet a person who is in the same room as the robot",
           {{"?robot", "at", "?room"}, {"?person", "at", "?room"}},
           {{"?robot", "greeted", "?person"}},
           {}});
    return r;
  }();
  return registry;
}

std::string render_template(std::string_view tpl, const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      auto close = tpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto name = tpl.substr(i + 1, close - i - 1);
        auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tpl[i++];
  }
  return out;
}

const PromptTemplates& PromptTemplates::builtin() {
  static const PromptTemplates t{std::string(embedded::kPlanningPrompt), std::string(embedded::kGoalCheckPrompt),
                                 std::string(embedded::kFeedbackPrompt)};
  return t;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  return {read_file(dir + "/planning.txt"), read_file(dir + "/goal_check.txt"), read_file(dir + "/feedback.txt")};
}

std::string action_line(const ActionSpec& spec) {
  std::string out = spec.name + "(";
  for (std::size_t i = 0; i < spec.params.size(); ++i) {
    if (i) out += ", ";
    out += spec.params[i].name.substr(1) + ": " + spec.params[i].node_class;
  }
  return out + ") - " + spec.description;
}

namespace {

std::string state_block(const ws::WorldState& world_state) {
  return world_state.items.empty() ? std::string("(no facts)") : world_state.joined();
}

}  // namespace

std::string build_planning_prompt(const ActionRegistry& registry, const ws::WorldState& world_state, const Goal& goal,
                                  const std::optional<std::string>& feedback, const PromptTemplates& templates) {
  if (registry.empty()) throw std::invalid_argument("planning prompt needs at least one action");
  if (goal.nl_text.empty()) throw std::invalid_argument("goal has no text");
  std::string actions;
  for (const auto& spec : registry.specs()) {
    if (!actions.empty()) actions += '\n';
    actions += action_line(spec);
  }
  std::string feedback_text;
  if (feedback) feedback_text = render_template(templates.feedback, {{"rationale", *feedback}});
  return render_template(templates.planning, {{"actions", actions},
                                              {"world_state", state_block(world_state)},
                                              {"goal", goal.nl_text},
                                              {"feedback", feedback_text}});
}

std::string build_goal_check_prompt(const ws::WorldState& world_state, const Goal& goal,
                                    const PromptTemplates& templates) {
  if (goal.nl_text.empty()) throw std::invalid_argument("goal has no text");
  return render_template(templates.goal_check, {{"world_state", state_block(world_state)}, {"goal", goal.nl_text}});
}

namespace {

nlohmann::json parse_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw PlanError(PlanError::Kind::MalformedJson, std::string("not valid JSON: ") + e.what());
  }
}

[[noreturn]] void schema(const std::string& msg) { throw PlanError(PlanError::Kind::SchemaMismatch, msg); }

}  // namespace

Plan parse_plan(std::string_view text, const ActionRegistry& registry) {
  const auto doc = parse_json(text);
  if (!doc.is_object()) schema("expected an object with a \"plan\" array");
  if (doc.size() != 1 || !doc.contains("plan")) schema("expected exactly one key, \"plan\"");
  const auto& steps = doc["plan"];
  if (!steps.is_array()) schema("\"plan\" must be an array");
  Plan plan;
  plan.source = PlanSource::Llm;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& step = steps[i];
    const auto where = "step " + std::to_string(i + 1);
    if (!step.is_object() || step.size() != 2 || !step.contains("action") || !step.contains("args")) {
      schema(where + " must be {\"action\":..., \"args\":[...]}");
    }
    if (!step["action"].is_string()) schema(where + ": \"action\" must be a string");
    if (!step["args"].is_array()) schema(where + ": \"args\" must be an array");
    ActionCall call{step["action"].get<std::string>(), {}};
    for (const auto& a : step["args"]) {
      if (!a.is_string()) schema(where + ": arguments must be strings");
      call.args.push_back(a.get<std::string>());
    }
    registry.validate(call);
    plan.steps.push_back(std::move(call));
  }
  return plan;
}

GoalCheckResult parse_goal_check(std::string_view text) {
  const auto doc = parse_json(text);
  if (!doc.is_object() || doc.size() != 2 || !doc.contains("achieved") || !doc.contains("rationale")) {
    schema("expected {\"achieved\": bool, \"rationale\": string}");
  }
  if (!doc["achieved"].is_boolean()) schema("\"achieved\" must be a boolean");
  if (!doc["rationale"].is_string()) schema("\"rationale\" must be a string");
  GoalCheckResult r{doc["achieved"].get<bool>(), doc["rationale"].get<std::string>()};
  if (!r.achieved && r.rationale.empty()) schema("a failed check needs a rationale");
  return r;
}

bool uses_rag(Variant v) { return v == Variant::FI || v == Variant::NCI; }
bool uses_goal_check(Variant v) { return v == Variant::FI || v == Variant::NRI; }

const char* to_string(Variant v) {
  switch (v) {
    case Variant::FI: return "FI";
    case Variant::NRI: return "NRI";
    case Variant::NCI: return "NCI";
    case Variant::NRNCI: return "NRNCI";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto v : {Variant::FI, Variant::NRI, Variant::NCI, Variant::NRNCI}) {
    if (upper == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(text) + "' (FI, NRI, NCI, NRNCI)");
}

void LayerConfig::validate() const {
  if (parse_retry < 0) throw std::invalid_argument("parse_retry must be >= 0");
  if (replan_limit < 0) throw std::invalid_argument("replan_limit must be >= 0");
  if (plan_max_tokens < 1 || check_max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (uses_rag(variant) && retrieval_k == 0) throw std::invalid_argument("retrieval_k must be >= 1 with retrieval");
}

std::size_t MissionTrace::generate_calls(std::string_view purpose) const {
  return static_cast<std::size_t>(std::count_if(generations.begin(), generations.end(),
                                                [&](const Generation& g) { return g.purpose == purpose; }));
}

std::string MissionTrace::to_json_lines() const {
  using nlohmann::json;
  std::string out;
  auto emit = [&](const json& j) { out += j.dump() + "\n"; };
  for (const auto& e : states.entries) emit({{"kind", "state"}, {"state", e.state}, {"t_ms", e.t_ms}, {"outcome", e.outcome}});
  for (const auto& g : generations) {
    emit({{"kind", "generation"},
          {"purpose", g.purpose},
          {"prompt", g.prompt},
          {"response", g.response},
          {"latency_s", g.latency_seconds},
          {"error", g.error}});
  }
  for (const auto& p : plans) emit({{"kind", "plan"}, {"plan", json::parse(to_plan_json(p))["plan"]}});
  for (const auto& c : checks) emit({{"kind", "check"}, {"achieved", c.achieved}, {"rationale", c.rationale}});
  for (const auto& a : executed) emit({{"kind", "action"}, {"action", a.action}, {"args", a.args}});
  emit({{"kind", "summary"},
        {"planning_rounds", planning_rounds},
        {"backend_seconds", backend_seconds},
        {"failure_reason", failure_reason}});
  return out;
}

}  // namespace nlplan::planner
