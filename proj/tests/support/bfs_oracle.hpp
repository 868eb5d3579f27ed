#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlplan/classic.hpp"

namespace nlplan::oracle {

// Every action sequence up to `depth` steps over all typed argument
// combinations, validated with apply(); returns the shortest goal length.
inline std::optional<std::size_t> brute_force_min(const classic::Domain& d, const classic::Problem& p, std::size_t depth) {
  std::vector<ActionCall> calls;
  for (const auto& a : d.actions) {
    std::vector<std::vector<std::string>> combos{{}};
    for (const auto& param : a.params) {
      std::vector<std::vector<std::string>> next;
      for (const auto& c : combos) {
        for (const auto& [obj, type] : p.objects) {
          if (!d.is_subtype(type, param.type)) continue;
          auto ext = c;
          ext.push_back(obj);
          next.push_back(ext);
        }
      }
      combos = std::move(next);
    }
    for (auto& c : combos) calls.push_back({a.name, c});
  }
  std::vector<classic::GroundState> frontier{p.init};
  for (std::size_t len = 0; len <= depth; ++len) {
    for (const auto& s : frontier) {
      if (classic::satisfies(s, p.goal)) return len;
    }
    std::vector<classic::GroundState> next;
    for (const auto& s : frontier) {
      for (const auto& c : calls) {
        try {
          next.push_back(classic::apply(d, p, s, c));
        } catch (const classic::PlanningError&) {
        }
      }
    }
    frontier = std::move(next);
  }
  return std::nullopt;
}

}  // namespace nlplan::oracle
