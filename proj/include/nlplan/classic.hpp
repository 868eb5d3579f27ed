#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nlplan/kgraph.hpp"
#include "nlplan/plan.hpp"

namespace nlplan::classic {

struct SourceLocation {
  std::string file;
  std::size_t line{0};
  std::size_t column{0};
};

/// Diagnostic rendered as "file:line:col: <kind> error: message".
class PddlError : public std::runtime_error {
 public:
  enum class Kind { Lex, Parse, Semantic };

  PddlError(Kind kind, SourceLocation where, const std::string& message);
  Kind kind() const noexcept { return kind_; }
  const SourceLocation& where() const noexcept { return where_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Kind kind_;
  SourceLocation where_;
  std::string message_;
};

class PlanningError : public std::runtime_error {
 public:
  enum class Kind { Unsolvable, PreconditionUnsatisfied, UnknownAction, Vocabulary };

  PlanningError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct TypedParam {
  std::string name;  // "?r"
  std::string type;
  friend bool operator==(const TypedParam&, const TypedParam&) = default;
};

/// Predicate applied to variables (inside schemas) or objects (ground).
struct Atom {
  std::string predicate;
  std::vector<std::string> args;
  friend auto operator<=>(const Atom&, const Atom&) = default;
};

std::string to_string(const Atom& atom);

struct PredicateDecl {
  std::string name;
  std::vector<TypedParam> params;
  friend bool operator==(const PredicateDecl&, const PredicateDecl&) = default;
};

struct ActionSchema {
  std::string name;
  std::vector<TypedParam> params;
  std::vector<Atom> precondition;
  std::vector<Atom> add;
  std::vector<Atom> del;
  friend bool operator==(const ActionSchema&, const ActionSchema&) = default;
};

struct Domain {
  std::string name;
  std::vector<std::string> requirements;
  std::vector<std::string> types;            // declaration order
  std::map<std::string, std::string> parent;  // type -> supertype ("object" when absent)
  std::vector<PredicateDecl> predicates;
  std::vector<ActionSchema> actions;

  const PredicateDecl* find_predicate(std::string_view name) const;
  const ActionSchema* find_action(std::string_view name) const;
  bool is_subtype(const std::string& type, const std::string& of) const;
  friend bool operator==(const Domain&, const Domain&) = default;
};

struct Problem {
  std::string name;
  std::string domain_name;
  std::vector<std::pair<std::string, std::string>> objects;  // (name, type), declaration order
  std::set<Atom> init;
  std::vector<Atom> goal;

  const std::string* object_type(std::string_view object) const;
  friend bool operator==(const Problem&, const Problem&) = default;
};

/// Supported subset: :strips and :typing; conjunctive positive preconditions;
/// add and (not ...) delete effects.
Domain parse_domain(std::string_view text, const std::string& file = "<domain>");
Problem parse_problem(std::string_view text, const Domain& domain, const std::string& file = "<problem>");

std::string to_pddl(const Domain& domain);
std::string to_pddl(const Problem& problem);

using GroundState = std::set<Atom>;

/// STRIPS successor: (state \ delete) U add. Throws PreconditionUnsatisfied.
GroundState apply(const Domain& domain, const Problem& problem, const GroundState& state, const ActionCall& call);

bool satisfies(const GroundState& state, const std::vector<Atom>& goal);

struct SearchStats {
  std::size_t ground_actions{0};
  std::size_t expanded{0};
  std::size_t generated{0};
};

/// Breadth-first forward search over exhaustively grounded actions; returns a
/// shortest plan by step count. Throws Unsolvable when the reachable space is
/// exhausted.
Plan plan(const Domain& domain, const Problem& problem, SearchStats* stats = nullptr);

/// Greeting-vocabulary translation: robot/person/room nodes become objects,
/// `at` edges become robot_at/person_at, `greeted` edges become greeted.
/// House nodes and `in` edges are known but carry no planning content.
Problem graph_to_problem(const kg::KnowledgeGraph& graph, const GoalPredicate& goal, const Domain& domain);

/// Reads a goal written as "greeted angel" or "(greeted angel)".
GoalPredicate parse_goal_atom(std::string_view text);

/// The shipped greeting domain.
const Domain& greeting_domain();
std::string_view greeting_domain_text();

}  // namespace nlplan::classic
