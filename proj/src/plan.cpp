#include "nlplan/plan.hpp"

#include "json.hpp"

namespace nlplan {

std::string to_sexpr(const ActionCall& call) {
  std::string out = "(" + call.action;
  for (const auto& a : call.args) out += " " + a;
  return out + ")";
}

std::string to_plan_json(const Plan& plan) {
  auto steps = nlohmann::json::array();
  for (const auto& s : plan.steps) steps.push_back({{"action", s.action}, {"args", s.args}});
  return nlohmann::json{{"plan", steps}}.dump();
}

}  // namespace nlplan
