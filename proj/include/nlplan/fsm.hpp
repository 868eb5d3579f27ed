#pragma once

#include <any>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <typeinfo>
#include <vector>

namespace nlplan::fsm {

inline const std::string kSucceeded = "succeeded";
inline const std::string kFailed = "failed";
inline const std::string kCanceled = "canceled";

class FsmError : public std::runtime_error {
 public:
  enum class Kind { InvalidMachine, InvalidTransition, MissingKey, WrongType };

  FsmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Shared, set-once cancellation flag. Copies observe the same flag.
class CancellationToken {
 public:
  CancellationToken() : flag_(std::make_shared<std::atomic<bool>>(false)) {}

  void cancel() const noexcept { flag_->store(true, std::memory_order_release); }
  bool is_canceled() const noexcept { return flag_->load(std::memory_order_acquire); }

 private:
  std::shared_ptr<std::atomic<bool>> flag_;
};

/// Typed key-value store shared by the states of one run.
class Blackboard {
 public:
  template <typename T>
  void set(const std::string& key, T value) {
    values_[key] = std::move(value);
  }

  template <typename T>
  T& get(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw FsmError(FsmError::Kind::MissingKey, "blackboard has no key '" + key + "'");
    auto* value = std::any_cast<T>(&it->second);
    if (value == nullptr) {
      throw FsmError(FsmError::Kind::WrongType, "blackboard key '" + key + "' holds " + it->second.type().name());
    }
    return *value;
  }

  template <typename T>
  const T& get(const std::string& key) const {
    return const_cast<Blackboard*>(this)->get<T>(key);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void erase(const std::string& key) { values_.erase(key); }

 private:
  std::map<std::string, std::any> values_;
};

struct TraceEntry {
  std::string state;  // slash-separated path for nested machines
  double t_ms{0.0};   // since the outermost run started
  std::string outcome;
};

class Trace {
 public:
  std::vector<TraceEntry> entries;

  std::vector<std::string> states() const;
  std::size_t count(const std::string& state_path) const;
  /// One JSON object per line: {"state":..., "t_ms":..., "outcome":...}.
  std::string to_json_lines() const;
};

struct RunContext {
  Trace* trace{nullptr};
  std::string prefix;
  std::chrono::steady_clock::time_point started;
};

class State {
 public:
  virtual ~State() = default;
  /// Outcomes this state can return, not counting the implicit "canceled".
  virtual std::set<std::string> outcomes() const = 0;
  virtual std::string execute(Blackboard& blackboard, const CancellationToken& token) = 0;

  /// Entry point used by StateMachine; nested machines override it to write
  /// into the caller's trace.
  virtual std::string execute_in(Blackboard& blackboard, const CancellationToken& token, RunContext&) {
    return execute(blackboard, token);
  }
};

/// State backed by a callable.
class FunctionState final : public State {
 public:
  using Body = std::function<std::string(Blackboard&, const CancellationToken&)>;

  FunctionState(std::set<std::string> outcomes, Body body) : outcomes_(std::move(outcomes)), body_(std::move(body)) {}

  std::set<std::string> outcomes() const override { return outcomes_; }
  std::string execute(Blackboard& blackboard, const CancellationToken& token) override {
    return body_(blackboard, token);
  }

 private:
  std::set<std::string> outcomes_;
  Body body_;
};

/// Outcome-driven state machine. Transitions map (state, outcome) to another
/// state or to one of the machine's terminal outcomes. "canceled" is always a
/// terminal outcome; a state that throws yields "failed", which ends the run
/// unless the state maps it.
class StateMachine {
 public:
  static constexpr std::size_t kDefaultStepBudget = 10000;

  explicit StateMachine(std::set<std::string> outcomes);

  /// The first state added becomes the initial state.
  StateMachine& add_state(const std::string& name, std::shared_ptr<State> state,
                          std::map<std::string, std::string> transitions);
  StateMachine& set_initial(const std::string& name);
  StateMachine& set_step_budget(std::size_t steps);

  const std::set<std::string>& outcomes() const { return outcomes_; }
  const std::string& initial() const { return initial_; }
  std::vector<std::string> state_names() const;

  /// Unreachable states, missing or undeclared transitions, dangling targets.
  std::vector<std::string> validate() const;

  /// Runs from the initial state until a terminal outcome. Throws
  /// FsmError(InvalidMachine) when validate() reports defects and
  /// FsmError(InvalidTransition) when a state returns an unmapped outcome.
  std::string run(Blackboard& blackboard, const CancellationToken& token);
  std::string run_in(Blackboard& blackboard, const CancellationToken& token, RunContext& context);

  const Trace& trace() const { return trace_; }
  /// Reason for the last "failed" outcome produced by a thrown exception or
  /// an exhausted step budget; empty otherwise.
  const std::string& failure_reason() const { return failure_reason_; }

 private:
  struct Entry {
    std::shared_ptr<State> state;
    std::map<std::string, std::string> transitions;
  };

  std::set<std::string> outcomes_;
  std::map<std::string, Entry> states_;
  std::vector<std::string> order_;
  std::string initial_;
  std::size_t step_budget_{kDefaultStepBudget};
  Trace trace_;
  std::string failure_reason_;
};

/// Wraps a machine as a state of a parent machine. The child's terminal
/// outcome becomes the state's outcome; the token is shared downward.
std::shared_ptr<State> nest(std::shared_ptr<StateMachine> machine);

}  // namespace nlplan::fsm
