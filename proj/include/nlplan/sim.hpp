#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlplan/fsm.hpp"
#include "nlplan/kgraph.hpp"
#include "nlplan/plan.hpp"

namespace nlplan::sim {

class SimError : public std::runtime_error {
 public:
  enum class Kind { PreconditionViolation, UnknownAction, InvalidMap };

  SimError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct WorldMap {
  std::map<std::string, kg::Coord2> waypoints;
  double robot_speed{0.5};     // m/s
  double greet_duration{2.0};  // s

  /// Throws SimError(InvalidMap) on non-finite coordinates, speed <= 0 or
  /// negative greet duration.
  void validate() const;
  double distance(const std::string& from, const std::string& to) const;
  const kg::Coord2& position(const std::string& room) const;
};

/// entrance (0,0), bathroom (4,0), bedroom (4,3), living_room (0,3).
WorldMap default_map();
/// {"waypoints":{"entrance":[0,0],...},"robot_speed":0.5,"greet_duration":2.0}
WorldMap map_from_json(const std::string& text);
WorldMap load_map_file(const std::string& path);

struct ActionEvent {
  ActionCall call;
  double t_start{0.0};
  double t_end{0.0};
  double distance{0.0};
  bool canceled{false};
  std::string robot_room;  // after the action
};

struct ActionEffect {
  std::vector<kg::Edge> added;
  std::vector<kg::EdgeKey> removed;
  double clock_delta{0.0};
  double distance_delta{0.0};
  bool canceled{false};
};

struct Metrics {
  double elapsed{0.0};   // simulated seconds
  double traveled{0.0};  // meters
};

/// Anything that carries out ground actions against the knowledge graph.
class ActionExecutor {
 public:
  virtual ~ActionExecutor() = default;
  /// Returns an effect with canceled=true when the token stops the action;
  /// throws on precondition violations.
  virtual ActionEffect execute(kg::KnowledgeGraph& graph, const ActionCall& call,
                               const fsm::CancellationToken& token) = 0;
};

/// Straight-line kinematics at constant speed over the map's waypoints.
///
/// navigate(robot, from, to): needs the robot at `from`; moves the robot's
/// `at` edge. Cancellation is checked every 0.1 s of simulated travel; a
/// canceled move snaps to the closer endpoint and keeps the partial distance.
/// greet(robot, person, room): needs robot and person at `room`; adds
/// (robot greeted person).
class Simulator final : public ActionExecutor {
 public:
  static constexpr double kSubStep = 0.1;

  Simulator(WorldMap map, std::string robot_id, std::string robot_room);
  /// Reads the robot (the single node of class "robot") and its room from the graph.
  static Simulator from_graph(WorldMap map, const kg::KnowledgeGraph& graph);

  ActionEffect execute(kg::KnowledgeGraph& graph, const ActionCall& call,
                       const fsm::CancellationToken& token) override;

  /// Cancels `token` once the clock reaches `t`. The check happens at action
  /// starts and navigate sub-steps, so it fires at the first such point at or
  /// after the deadline.
  void arm_deadline(double t, fsm::CancellationToken token);
  void disarm_deadline();
  bool deadline_fired() const { return deadline_fired_; }

  Metrics metrics() const { return {clock_, odometer_}; }
  double clock() const { return clock_; }
  double odometer() const { return odometer_; }
  const std::string& robot_id() const { return robot_id_; }
  const std::string& robot_room() const { return robot_room_; }
  const WorldMap& map() const { return map_; }
  const std::vector<ActionEvent>& event_log() const { return events_; }
  /// One JSON object per event.
  std::string event_log_json_lines() const;

 private:
  bool poll(const fsm::CancellationToken& token, double now);
  ActionEffect navigate(kg::KnowledgeGraph& graph, const ActionCall& call, const fsm::CancellationToken& token);
  ActionEffect greet(kg::KnowledgeGraph& graph, const ActionCall& call, const fsm::CancellationToken& token);

  WorldMap map_;
  std::string robot_id_;
  std::string robot_room_;
  double clock_{0.0};
  double odometer_{0.0};
  std::vector<ActionEvent> events_;
  std::optional<double> deadline_;
  std::optional<fsm::CancellationToken> deadline_token_;
  bool deadline_fired_{false};
};

}  // namespace nlplan::sim
