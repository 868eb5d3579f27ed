#pragma once

#include <string>
#include <vector>

namespace nlplan {

/// One grounded action: a name plus object arguments.
struct ActionCall {
  std::string action;
  std::vector<std::string> args;

  friend bool operator==(const ActionCall&, const ActionCall&) = default;
};

/// Ground goal atom such as greeted(angel).
struct GoalPredicate {
  std::string name;
  std::vector<std::string> args;

  friend bool operator==(const GoalPredicate&, const GoalPredicate&) = default;
};

enum class PlanSource { Llm, Classic };

struct Plan {
  std::vector<ActionCall> steps;
  PlanSource source{PlanSource::Classic};

  bool empty() const { return steps.empty(); }
  std::size_t size() const { return steps.size(); }
};

/// "(navigate rb1 entrance bedroom)"
std::string to_sexpr(const ActionCall& call);
/// {"plan":[{"action":"navigate","args":["rb1","entrance","bedroom"]}]}
std::string to_plan_json(const Plan& plan);

}  // namespace nlplan
