#include <algorithm>
#include <cctype>
#include <deque>
#include <map>

#include "nlplan/classic.hpp"

namespace nlplan::classic {

namespace {

Atom substitute(const Atom& atom, const std::map<std::string, std::string>& binding) {
  Atom out{atom.predicate, {}};
  out.args.reserve(atom.args.size());
  for (const auto& a : atom.args) {
    auto it = binding.find(a);
    out.args.push_back(it == binding.end() ? a : it->second);
  }
  return out;
}

struct GroundAction {
  ActionCall call;
  std::vector<Atom> pre;
  std::vector<Atom> add;
  std::vector<Atom> del;
};

GroundAction ground(const ActionSchema& schema, const std::vector<std::string>& args) {
  std::map<std::string, std::string> binding;
  for (std::size_t i = 0; i < schema.params.size(); ++i) binding[schema.params[i].name] = args[i];
  GroundAction g{{schema.name, args}, {}, {}, {}};
  for (const auto& a : schema.precondition) g.pre.push_back(substitute(a, binding));
  for (const auto& a : schema.add) g.add.push_back(substitute(a, binding));
  for (const auto& a : schema.del) g.del.push_back(substitute(a, binding));
  return g;
}

GroundState successor(const GroundState& state, const GroundAction& g) {
  GroundState next = state;
  for (const auto& a : g.del) next.erase(a);
  for (const auto& a : g.add) next.insert(a);
  return next;
}

bool applicable(const GroundState& state, const GroundAction& g) {
  return std::all_of(g.pre.begin(), g.pre.end(), [&](const Atom& a) { return state.count(a) != 0; });
}

// Objects sorted by name; actions in schema order, arguments in lexicographic
// order of the candidate tuples.
std::vector<GroundAction> ground_all(const Domain& domain, const Problem& problem) {
  auto objects = problem.objects;
  std::sort(objects.begin(), objects.end());
  std::vector<GroundAction> out;
  for (const auto& schema : domain.actions) {
    std::vector<std::vector<std::string>> candidates(schema.params.size());
    for (std::size_t i = 0; i < schema.params.size(); ++i) {
      for (const auto& [name, type] : objects) {
        if (domain.is_subtype(type, schema.params[i].type)) candidates[i].push_back(name);
      }
    }
    std::vector<std::string> args(schema.params.size());
    auto recurse = [&](auto&& self, std::size_t depth) -> void {
      if (depth == args.size()) {
        out.push_back(ground(schema, args));
        return;
      }
      for (const auto& c : candidates[depth]) {
        args[depth] = c;
        self(self, depth + 1);
      }
    };
    recurse(recurse, 0);
  }
  return out;
}

}  // namespace

bool satisfies(const GroundState& state, const std::vector<Atom>& goal) {
  return std::all_of(goal.begin(), goal.end(), [&](const Atom& a) { return state.count(a) != 0; });
}

GroundState apply(const Domain& domain, const Problem& problem, const GroundState& state, const ActionCall& call) {
  const auto* schema = domain.find_action(call.action);
  if (!schema) throw PlanningError(PlanningError::Kind::UnknownAction, "unknown action '" + call.action + "'");
  if (schema->params.size() != call.args.size()) {
    throw PlanningError(PlanningError::Kind::UnknownAction,
                        "action '" + call.action + "' takes " + std::to_string(schema->params.size()) +
                            " arguments, got " + std::to_string(call.args.size()));
  }
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    const auto* type = problem.object_type(call.args[i]);
    if (!type || !domain.is_subtype(*type, schema->params[i].type)) {
      throw PlanningError(PlanningError::Kind::PreconditionUnsatisfied,
                          "argument '" + call.args[i] + "' is not an object of type '" + schema->params[i].type + "'");
    }
  }
  const auto g = ground(*schema, call.args);
  for (const auto& a : g.pre) {
    if (state.count(a) == 0) {
      throw PlanningError(PlanningError::Kind::PreconditionUnsatisfied,
                          to_sexpr(call) + ": precondition " + to_string(a) + " does not hold");
    }
  }
  return successor(state, g);
}

Plan plan(const Domain& domain, const Problem& problem, SearchStats* stats) {
  SearchStats local;
  SearchStats& s = stats ? *stats : local;
  s = {};
  const auto actions = ground_all(domain, problem);
  s.ground_actions = actions.size();

  Plan result;
  result.source = PlanSource::Classic;
  if (satisfies(problem.init, problem.goal)) return result;

  // parent[state] = (predecessor state, action index)
  struct Link {
    const GroundState* prev;
    std::size_t action;
  };
  std::map<GroundState, Link> seen;
  std::deque<const GroundState*> frontier;
  auto root = seen.emplace(problem.init, Link{nullptr, 0}).first;
  frontier.push_back(&root->first);

  while (!frontier.empty()) {
    const GroundState* current = frontier.front();
    frontier.pop_front();
    ++s.expanded;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      if (!applicable(*current, actions[i])) continue;
      auto next = successor(*current, actions[i]);
      ++s.generated;
      auto [it, inserted] = seen.emplace(std::move(next), Link{current, i});
      if (!inserted) continue;
      if (satisfies(it->first, problem.goal)) {
        std::vector<ActionCall> reversed;
        for (const GroundState* at = &it->first; seen.at(*at).prev != nullptr; at = seen.at(*at).prev) {
          reversed.push_back(actions[seen.at(*at).action].call);
        }
        result.steps.assign(reversed.rbegin(), reversed.rend());
        return result;
      }
      frontier.push_back(&it->first);
    }
  }
  std::string goal_text;
  for (const auto& a : problem.goal) goal_text += (goal_text.empty() ? "" : " ") + to_string(a);
  throw PlanningError(PlanningError::Kind::Unsolvable,
                      "no plan reaches " + goal_text + " (" + std::to_string(s.expanded) + " states explored)");
}

Problem graph_to_problem(const kg::KnowledgeGraph& graph, const GoalPredicate& goal, const Domain& domain) {
  Problem p;
  p.name = "mission";
  p.domain_name = domain.name;
  for (const auto& [id, node] : graph.nodes()) {
    const auto& cls = node.node_class;
    if (cls == "house") continue;
    if (cls != "robot" && cls != "person" && cls != "room") {
      throw PlanningError(PlanningError::Kind::Vocabulary,
                          "node '" + id + "' has class '" + cls + "', which has no planning mapping");
    }
    p.objects.emplace_back(id, cls);
  }
  for (const auto& [key, edge] : graph.edges()) {
    if (key.relation == "in") continue;
    if (key.relation == "at") {
      const auto* src = graph.find_node(key.source);
      if (src->node_class == "robot") {
        p.init.insert({"robot_at", {key.source, key.target}});
      } else if (src->node_class == "person") {
        p.init.insert({"person_at", {key.source, key.target}});
      } else {
        throw PlanningError(PlanningError::Kind::Vocabulary,
                            "'at' edge from '" + key.source + "' of class '" + src->node_class + "'");
      }
    } else if (key.relation == "greeted") {
      p.init.insert({"greeted", {key.target}});
    } else {
      throw PlanningError(PlanningError::Kind::Vocabulary, "relation '" + key.relation + "' has no planning mapping");
    }
  }
  const auto* pred = domain.find_predicate(goal.name);
  if (!pred) throw PlanningError(PlanningError::Kind::Vocabulary, "goal predicate '" + goal.name + "' is undeclared");
  if (pred->params.size() != goal.args.size()) {
    throw PlanningError(PlanningError::Kind::Vocabulary, "goal predicate '" + goal.name + "' has wrong arity");
  }
  for (std::size_t i = 0; i < goal.args.size(); ++i) {
    const auto* type = p.object_type(goal.args[i]);
    if (!type || !domain.is_subtype(*type, pred->params[i].type)) {
      throw PlanningError(PlanningError::Kind::Vocabulary,
                          "goal argument '" + goal.args[i] + "' is not an object of type '" + pred->params[i].type + "'");
    }
  }
  p.goal.push_back({goal.name, goal.args});
  return p;
}

GoalPredicate parse_goal_atom(std::string_view text) {
  std::string cleaned;
  for (char c : text) cleaned += (c == '(' || c == ')' || c == ',') ? ' ' : c;
  std::vector<std::string> words;
  std::string word;
  for (char c : cleaned) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!word.empty()) words.push_back(std::move(word));
      word.clear();
    } else {
      word += c;
    }
  }
  if (!word.empty()) words.push_back(std::move(word));
  if (words.empty()) throw std::invalid_argument("empty goal");
  GoalPredicate g{words.front(), {words.begin() + 1, words.end()}};
  return g;
}

}  // namespace nlplan::classic
