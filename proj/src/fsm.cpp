#include "nlplan/fsm.hpp"

#include <algorithm>
#include <deque>

#include "json.hpp"

namespace nlplan::fsm {

std::vector<std::string> Trace::states() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.state);
  return out;
}

std::size_t Trace::count(const std::string& state_path) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const TraceEntry& e) { return e.state == state_path; }));
}

std::string Trace::to_json_lines() const {
  std::string out;
  for (const auto& e : entries) {
    out += nlohmann::json{{"state", e.state}, {"t_ms", e.t_ms}, {"outcome", e.outcome}}.dump();
    out += '\n';
  }
  return out;
}

StateMachine::StateMachine(std::set<std::string> outcomes) : outcomes_(std::move(outcomes)) {
  outcomes_.insert(kCanceled);
}

StateMachine& StateMachine::add_state(const std::string& name, std::shared_ptr<State> state,
                                      std::map<std::string, std::string> transitions) {
  if (!state) throw FsmError(FsmError::Kind::InvalidMachine, "state '" + name + "' is null");
  if (states_.count(name) != 0) throw FsmError(FsmError::Kind::InvalidMachine, "state '" + name + "' added twice");
  states_.emplace(name, Entry{std::move(state), std::move(transitions)});
  order_.push_back(name);
  if (initial_.empty()) initial_ = name;
  return *this;
}

StateMachine& StateMachine::set_initial(const std::string& name) {
  initial_ = name;
  return *this;
}

StateMachine& StateMachine::set_step_budget(std::size_t steps) {
  step_budget_ = steps;
  return *this;
}

std::vector<std::string> StateMachine::state_names() const { return order_; }

std::vector<std::string> StateMachine::validate() const {
  std::vector<std::string> defects;
  if (states_.empty()) defects.push_back("machine has no states");
  if (!initial_.empty() && states_.count(initial_) == 0) {
    defects.push_back("initial state '" + initial_ + "' is not defined");
  }
  for (const auto& name : order_) {
    if (outcomes_.count(name) != 0) defects.push_back("'" + name + "' is both a state and a terminal outcome");
  }
  for (const auto& name : order_) {
    const auto& entry = states_.at(name);
    const auto declared = entry.state->outcomes();
    for (const auto& outcome : declared) {
      if (outcome == kCanceled) continue;
      if (entry.transitions.count(outcome) == 0) {
        defects.push_back("state '" + name + "' has no transition for outcome '" + outcome + "'");
      }
    }
    for (const auto& [outcome, target] : entry.transitions) {
      if (declared.count(outcome) == 0 && outcome != kCanceled && outcome != kFailed) {
        defects.push_back("state '" + name + "' maps undeclared outcome '" + outcome + "'");
      }
      if (states_.count(target) == 0 && outcomes_.count(target) == 0) {
        defects.push_back("state '" + name + "' outcome '" + outcome + "' targets undefined '" + target + "'");
      }
    }
  }
  if (states_.count(initial_) != 0) {
    std::set<std::string> reached{initial_};
    std::deque<std::string> frontier{initial_};
    while (!frontier.empty()) {
      const auto current = frontier.front();
      frontier.pop_front();
      for (const auto& [outcome, target] : states_.at(current).transitions) {
        if (states_.count(target) != 0 && reached.insert(target).second) frontier.push_back(target);
      }
    }
    for (const auto& name : order_) {
      if (reached.count(name) == 0) defects.push_back("state '" + name + "' is unreachable");
    }
  }
  return defects;
}

std::string StateMachine::run(Blackboard& blackboard, const CancellationToken& token) {
  trace_.entries.clear();
  RunContext context{&trace_, "", std::chrono::steady_clock::now()};
  return run_in(blackboard, token, context);
}

std::string StateMachine::run_in(Blackboard& blackboard, const CancellationToken& token, RunContext& context) {
  const auto defects = validate();
  if (!defects.empty()) {
    std::string msg = "invalid state machine:";
    for (const auto& d : defects) msg += "\n  " + d;
    throw FsmError(FsmError::Kind::InvalidMachine, msg);
  }
  failure_reason_.clear();
  Trace* trace = context.trace != nullptr ? context.trace : &trace_;
  std::string current = initial_;
  for (std::size_t step = 0;; ++step) {
    if (token.is_canceled()) return kCanceled;
    if (step >= step_budget_) {
      failure_reason_ = "step_budget_exhausted";
      return kFailed;
    }
    auto& entry = states_.at(current);
    const auto path = context.prefix + current;
    const std::chrono::duration<double, std::milli> since = std::chrono::steady_clock::now() - context.started;
    trace->entries.push_back({path, since.count(), ""});
    const auto index = trace->entries.size() - 1;

    std::string outcome;
    RunContext child{trace, path + "/", context.started};
    try {
      outcome = entry.state->execute_in(blackboard, token, child);
    } catch (const FsmError& e) {
      if (e.kind() == FsmError::Kind::InvalidMachine || e.kind() == FsmError::Kind::InvalidTransition) throw;
      failure_reason_ = path + ": " + e.what();
      outcome = kFailed;
    } catch (const std::exception& e) {
      failure_reason_ = path + ": " + e.what();
      outcome = kFailed;
    }
    trace->entries[index].outcome = outcome;

    auto next = entry.transitions.find(outcome);
    if (next == entry.transitions.end()) {
      if (outcome == kCanceled || outcome == kFailed) return outcome;
      throw FsmError(FsmError::Kind::InvalidTransition,
                     "state '" + path + "' returned outcome '" + outcome + "' with no transition");
    }
    if (outcomes_.count(next->second) != 0) return next->second;
    current = next->second;
  }
}

namespace {

class NestedState final : public State {
 public:
  explicit NestedState(std::shared_ptr<StateMachine> machine) : machine_(std::move(machine)) {}

  std::set<std::string> outcomes() const override {
    auto out = machine_->outcomes();
    out.erase(kCanceled);
    return out;
  }

  std::string execute(Blackboard& blackboard, const CancellationToken& token) override {
    return machine_->run(blackboard, token);
  }

  std::string execute_in(Blackboard& blackboard, const CancellationToken& token, RunContext& context) override {
    return machine_->run_in(blackboard, token, context);
  }

 private:
  std::shared_ptr<StateMachine> machine_;
};

}  // namespace

std::shared_ptr<State> nest(std::shared_ptr<StateMachine> machine) {
  const auto defects = machine->validate();
  if (!defects.empty()) throw FsmError(FsmError::Kind::InvalidMachine, "cannot nest invalid machine: " + defects.front());
  return std::make_shared<NestedState>(std::move(machine));
}

}  // namespace nlplan::fsm
