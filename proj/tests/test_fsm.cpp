#include <gtest/gtest.h>

#include <thread>

#include "nlplan/fsm.hpp"

namespace {

using namespace nlplan::fsm;

std::shared_ptr<State> returns(const std::string& outcome, std::set<std::string> outcomes = {}) {
  if (outcomes.empty()) outcomes = {outcome};
  return std::make_shared<FunctionState>(outcomes, [outcome](Blackboard&, const CancellationToken&) { return outcome; });
}

TEST(Fsm, SingleState) {
  StateMachine m({kSucceeded, kFailed});
  m.add_state("A", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(m.run(bb, token), kSucceeded);
  EXPECT_EQ(m.trace().states(), (std::vector<std::string>{"A"}));
}

TEST(Fsm, PreCanceledTokenSkipsBodies) {
  bool ran = false;
  StateMachine m({kSucceeded});
  m.add_state("A",
              std::make_shared<FunctionState>(std::set<std::string>{kSucceeded},
                                              [&](Blackboard&, const CancellationToken&) {
                                                ran = true;
                                                return kSucceeded;
                                              }),
              {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  token.cancel();
  EXPECT_EQ(m.run(bb, token), kCanceled);
  EXPECT_FALSE(ran);
  EXPECT_TRUE(m.trace().entries.empty());
}

TEST(Fsm, ThreeStateChain) {
  StateMachine m({kSucceeded});
  m.add_state("A", returns(kSucceeded), {{kSucceeded, "B"}});
  m.add_state("B", returns(kSucceeded), {{kSucceeded, "C"}});
  m.add_state("C", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(m.run(bb, token), kSucceeded);
  EXPECT_EQ(m.trace().states(), (std::vector<std::string>{"A", "B", "C"}));
  for (std::size_t i = 1; i < m.trace().entries.size(); ++i) {
    EXPECT_GE(m.trace().entries[i].t_ms, m.trace().entries[i - 1].t_ms);
  }
}

TEST(Fsm, NestedFailureRoutesToRetry) {
  auto child = std::make_shared<StateMachine>(std::set<std::string>{kSucceeded, kFailed});
  child->add_state("WORK", returns(kFailed), {{kFailed, kFailed}});
  StateMachine parent({kSucceeded, kFailed});
  parent.add_state("CHILD", nest(child), {{kSucceeded, kSucceeded}, {kFailed, "RETRY"}});
  parent.add_state("RETRY", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(parent.run(bb, token), kSucceeded);
  EXPECT_EQ(parent.trace().states(), (std::vector<std::string>{"CHILD", "CHILD/WORK", "RETRY"}));
  EXPECT_EQ(parent.trace().count("RETRY"), 1u);
}

TEST(Fsm, CancelInsideChildPropagates) {
  auto child = std::make_shared<StateMachine>(std::set<std::string>{kSucceeded});
  child->add_state("STOP",
                   std::make_shared<FunctionState>(std::set<std::string>{kSucceeded},
                                                   [](Blackboard&, const CancellationToken& t) {
                                                     t.cancel();
                                                     return kSucceeded;
                                                   }),
                   {{kSucceeded, "NEVER"}});
  child->add_state("NEVER", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  StateMachine parent({kSucceeded});
  parent.add_state("CHILD", nest(child), {{kSucceeded, "AFTER"}});
  parent.add_state("AFTER", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(parent.run(bb, token), kCanceled);
  EXPECT_EQ(parent.trace().count("CHILD/NEVER"), 0u);
  EXPECT_EQ(parent.trace().count("AFTER"), 0u);
}

TEST(Fsm, DepthThreeOutcomePropagates) {
  auto leaf = std::make_shared<StateMachine>(std::set<std::string>{"found", kFailed});
  leaf->add_state("L", returns("found"), {{"found", "found"}});
  auto middle = std::make_shared<StateMachine>(std::set<std::string>{"found", kFailed});
  middle->add_state("M", nest(leaf), {{"found", "found"}, {kFailed, kFailed}});
  auto top = std::make_shared<StateMachine>(std::set<std::string>{"found", kFailed});
  top->add_state("T", nest(middle), {{"found", "found"}, {kFailed, kFailed}});
  StateMachine root({kSucceeded, kFailed});
  root.add_state("R", nest(top), {{"found", kSucceeded}, {kFailed, kFailed}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(root.run(bb, token), kSucceeded);
  EXPECT_EQ(root.trace().states(), (std::vector<std::string>{"R", "R/T", "R/T/M", "R/T/M/L"}));
}

TEST(Fsm, ValidateReportsDefects) {
  StateMachine dangling({kSucceeded});
  dangling.add_state("A", returns(kSucceeded), {{kSucceeded, "NOWHERE"}});
  const auto d1 = dangling.validate();
  ASSERT_FALSE(d1.empty());
  EXPECT_NE(d1[0].find("NOWHERE"), std::string::npos);

  StateMachine unreachable({kSucceeded});
  unreachable.add_state("A", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  unreachable.add_state("ISLAND", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  const auto d2 = unreachable.validate();
  ASSERT_EQ(d2.size(), 1u);
  EXPECT_NE(d2[0].find("ISLAND"), std::string::npos);

  StateMachine missing({kSucceeded, kFailed});
  missing.add_state("A", returns(kSucceeded, {kSucceeded, "retry"}), {{kSucceeded, kSucceeded}});
  ASSERT_EQ(missing.validate().size(), 1u);

  Blackboard bb;
  CancellationToken token;
  EXPECT_THROW(dangling.run(bb, token), FsmError);
}

TEST(Fsm, PlanningLayerShapeValidates) {
  auto planning = std::make_shared<StateMachine>(std::set<std::string>{kSucceeded, kFailed});
  planning->add_state("GENERATE", returns(kSucceeded), {{kSucceeded, kSucceeded}});
  auto checking = std::make_shared<StateMachine>(std::set<std::string>{"achieved", "not_achieved"});
  checking->add_state("ASK", returns("achieved", {"achieved", "not_achieved"}),
                      {{"achieved", "achieved"}, {"not_achieved", "not_achieved"}});
  StateMachine layer({kSucceeded, kFailed});
  layer.add_state("PLANNING", nest(planning), {{kSucceeded, "EXECUTING_PLAN"}, {kFailed, kFailed}});
  layer.add_state("EXECUTING_PLAN", returns(kSucceeded, {kSucceeded, kFailed}),
                  {{kSucceeded, "CHECKING_GOAL"}, {kFailed, "CHECKING_GOAL"}});
  layer.add_state("CHECKING_GOAL", nest(checking), {{"achieved", kSucceeded}, {"not_achieved", "PLANNING"}});
  EXPECT_TRUE(layer.validate().empty());
}

TEST(Fsm, UnmappedOutcomeIsInvalidTransition) {
  StateMachine m({kSucceeded});
  m.add_state("A", returns("surprise", {kSucceeded}), {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  try {
    m.run(bb, token);
    FAIL();
  } catch (const FsmError& e) {
    EXPECT_EQ(e.kind(), FsmError::Kind::InvalidTransition);
  }
}

TEST(Fsm, ThrowingStateFails) {
  StateMachine m({kSucceeded, kFailed});
  m.add_state("A",
              std::make_shared<FunctionState>(std::set<std::string>{kSucceeded},
                                              [](Blackboard&, const CancellationToken&) -> std::string {
                                                throw std::runtime_error("boom");
                                              }),
              {{kSucceeded, kSucceeded}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(m.run(bb, token), kFailed);
  EXPECT_NE(m.failure_reason().find("boom"), std::string::npos);
}

TEST(Fsm, StepBudgetExhausted) {
  StateMachine m({kSucceeded, kFailed});
  m.add_state("LOOP", returns("again"), {{"again", "LOOP"}});
  Blackboard bb;
  CancellationToken token;
  EXPECT_EQ(m.run(bb, token), kFailed);
  EXPECT_EQ(m.failure_reason(), "step_budget_exhausted");
  EXPECT_EQ(m.trace().entries.size(), StateMachine::kDefaultStepBudget);
  m.set_step_budget(5);
  EXPECT_EQ(m.run(bb, token), kFailed);
  EXPECT_EQ(m.trace().entries.size(), 5u);
}

TEST(Fsm, CancelFromAnotherThreadEndsLoop) {
  StateMachine m({kSucceeded, kFailed});
  m.add_state("SPIN",
              std::make_shared<FunctionState>(std::set<std::string>{"again"},
                                              [](Blackboard&, const CancellationToken&) {
                                                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                                                return std::string("again");
                                              }),
              {{"again", "SPIN"}});
  m.set_step_budget(1000000);
  Blackboard bb;
  CancellationToken token;
  std::thread canceller([token] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    token.cancel();
  });
  EXPECT_EQ(m.run(bb, token), kCanceled);
  canceller.join();
  EXPECT_LT(m.trace().entries.size(), 1000000u);
}

TEST(Blackboard, TypedAccess) {
  Blackboard bb;
  EXPECT_THROW(bb.get<int>("x"), FsmError);
  bb.set("x", 3);
  EXPECT_EQ(bb.get<int>("x"), 3);
  try {
    bb.get<std::string>("x");
    FAIL();
  } catch (const FsmError& e) {
    EXPECT_EQ(e.kind(), FsmError::Kind::WrongType);
  }
  bb.erase("x");
  EXPECT_FALSE(bb.has("x"));
}

TEST(Trace, JsonLines) {
  Trace t;
  t.entries.push_back({"A", 0.5, kSucceeded});
  t.entries.push_back({"A/B", 1.0, "x\"y"});
  const auto text = t.to_json_lines();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find(R"("state":"A/B")"), std::string::npos);
  EXPECT_NE(text.find(R"(x\"y)"), std::string::npos);
}

}  // namespace
