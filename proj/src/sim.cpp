#include "nlplan/sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nlplan::sim {

namespace {

constexpr double kTimeEps = 1e-9;

[[noreturn]] void violation(const std::string& msg) { throw SimError(SimError::Kind::PreconditionViolation, msg); }

}  // namespace

void WorldMap::validate() const {
  if (waypoints.empty()) throw SimError(SimError::Kind::InvalidMap, "map has no waypoints");
  for (const auto& [name, p] : waypoints) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw SimError(SimError::Kind::InvalidMap, "waypoint '" + name + "' has a non-finite coordinate");
    }
  }
  if (!std::isfinite(robot_speed) || robot_speed <= 0.0) {
    throw SimError(SimError::Kind::InvalidMap, "robot_speed must be positive");
  }
  if (!std::isfinite(greet_duration) || greet_duration < 0.0) {
    throw SimError(SimError::Kind::InvalidMap, "greet_duration must be non-negative");
  }
}

const kg::Coord2& WorldMap::position(const std::string& room) const {
  auto it = waypoints.find(room);
  if (it == waypoints.end()) violation("'" + room + "' is not a waypoint");
  return it->second;
}

double WorldMap::distance(const std::string& from, const std::string& to) const {
  const auto& a = position(from);
  const auto& b = position(to);
  return std::hypot(b.x - a.x, b.y - a.y);
}

WorldMap default_map() {
  WorldMap m;
  m.waypoints = {{"entrance", {0, 0}}, {"bathroom", {4, 0}}, {"bedroom", {4, 3}}, {"living_room", {0, 3}}};
  return m;
}

WorldMap map_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SimError(SimError::Kind::InvalidMap, std::string("map is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("waypoints") || !doc["waypoints"].is_object()) {
    throw SimError(SimError::Kind::InvalidMap, "map needs a \"waypoints\" object");
  }
  WorldMap m;
  for (const auto& [name, xy] : doc["waypoints"].items()) {
    if (!xy.is_array() || xy.size() != 2 || !xy[0].is_number() || !xy[1].is_number()) {
      throw SimError(SimError::Kind::InvalidMap, "waypoint '" + name + "' must be [x, y]");
    }
    m.waypoints[name] = {xy[0].get<double>(), xy[1].get<double>()};
  }
  for (const char* key : {"robot_speed", "greet_duration"}) {
    if (doc.contains(key) && !doc[key].is_number()) {
      throw SimError(SimError::Kind::InvalidMap, std::string(key) + " must be a number");
    }
  }
  m.robot_speed = doc.value("robot_speed", m.robot_speed);
  m.greet_duration = doc.value("greet_duration", m.greet_duration);
  m.validate();
  return m;
}

WorldMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError(SimError::Kind::InvalidMap, "cannot open map file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return map_from_json(buf.str());
}

Simulator::Simulator(WorldMap map, std::string robot_id, std::string robot_room)
    : map_(std::move(map)), robot_id_(std::move(robot_id)), robot_room_(std::move(robot_room)) {
  map_.validate();
  if (map_.waypoints.count(robot_room_) == 0) {
    throw SimError(SimError::Kind::InvalidMap, "robot starts at '" + robot_room_ + "', which is not a waypoint");
  }
}

Simulator Simulator::from_graph(WorldMap map, const kg::KnowledgeGraph& graph) {
  std::string robot;
  for (const auto& [id, node] : graph.nodes()) {
    if (node.node_class != "robot") continue;
    if (!robot.empty()) throw SimError(SimError::Kind::InvalidMap, "graph has more than one robot");
    robot = id;
  }
  if (robot.empty()) throw SimError(SimError::Kind::InvalidMap, "graph has no robot");
  const auto at = graph.match({robot, "at", std::nullopt});
  if (at.size() != 1) throw SimError(SimError::Kind::InvalidMap, "robot '" + robot + "' must be at exactly one room");
  return Simulator(std::move(map), robot, at.front().target);
}

void Simulator::arm_deadline(double t, fsm::CancellationToken token) {
  deadline_ = t;
  deadline_token_ = std::move(token);
  deadline_fired_ = false;
}

void Simulator::disarm_deadline() {
  deadline_.reset();
  deadline_token_.reset();
}

bool Simulator::poll(const fsm::CancellationToken& token, double now) {
  if (deadline_ && !deadline_fired_ && now + kTimeEps >= *deadline_) {
    deadline_fired_ = true;
    deadline_token_->cancel();
  }
  return token.is_canceled();
}

ActionEffect Simulator::execute(kg::KnowledgeGraph& graph, const ActionCall& call,
                                const fsm::CancellationToken& token) {
  if (poll(token, clock_)) {
    ActionEffect effect;
    effect.canceled = true;
    return effect;
  }
  if (call.action == "navigate") return navigate(graph, call, token);
  if (call.action == "greet") return greet(graph, call, token);
  throw SimError(SimError::Kind::UnknownAction, "the simulator has no skill '" + call.action + "'");
}

ActionEffect Simulator::navigate(kg::KnowledgeGraph& graph, const ActionCall& call,
                                 const fsm::CancellationToken& token) {
  if (call.args.size() != 3) violation("navigate takes (robot, from, to)");
  const auto& robot = call.args[0];
  const auto& from = call.args[1];
  const auto& to = call.args[2];
  if (robot != robot_id_) violation("unknown robot '" + robot + "'");
  if (from != robot_room_) violation("robot is at '" + robot_room_ + "', not '" + from + "'");
  if (!graph.has_edge({robot, "at", from})) violation("graph does not place '" + robot + "' at '" + from + "'");
  if (!graph.has_node(to)) violation("unknown room '" + to + "'");
  const double leg = map_.distance(from, to);
  const double duration = leg / map_.robot_speed;
  const double start = clock_;

  double elapsed = duration;
  bool canceled = false;
  for (std::size_t k = 1;; ++k) {
    const double t = std::min(static_cast<double>(k) * kSubStep, duration);
    if (t >= duration) break;
    if (poll(token, start + t)) {
      elapsed = t;
      canceled = true;
      break;
    }
  }
  if (!canceled) poll(token, start + duration);

  double moved = leg;
  std::string arrived = to;
  if (canceled) {
    moved = map_.robot_speed * elapsed;
    if (moved > leg) moved = leg;
    if (moved * 2.0 <= leg) arrived = from;
  }

  ActionEffect effect;
  effect.canceled = canceled;
  effect.clock_delta = elapsed;
  effect.distance_delta = moved;
  if (arrived != from) {
    kg::Edge old = *graph.find_edge({robot, "at", from});
    graph.remove_edge(old.key());
    kg::Edge moved_edge{robot, "at", arrived, old.properties};
    graph.add_edge(moved_edge);
    effect.removed.push_back(old.key());
    effect.added.push_back(std::move(moved_edge));
  }
  clock_ += elapsed;
  odometer_ += moved;
  robot_room_ = arrived;
  events_.push_back({call, start, clock_, moved, canceled, robot_room_});
  return effect;
}

ActionEffect Simulator::greet(kg::KnowledgeGraph& graph, const ActionCall& call, const fsm::CancellationToken&) {
  if (call.args.size() != 3) violation("greet takes (robot, person, room)");
  const auto& robot = call.args[0];
  const auto& person = call.args[1];
  const auto& room = call.args[2];
  if (robot != robot_id_) violation("unknown robot '" + robot + "'");
  if (room != robot_room_) violation("robot is at '" + robot_room_ + "', not '" + room + "'");
  const auto* node = graph.find_node(person);
  if (!node || node->node_class != "person") violation("'" + person + "' is not a person");
  if (!graph.has_edge({person, "at", room})) violation("'" + person + "' is not at '" + room + "'");

  ActionEffect effect;
  const kg::EdgeKey key{robot, "greeted", person};
  if (graph.has_edge(key)) {
    graph.remove_edge(key);
    effect.removed.push_back(key);
  }
  kg::Edge edge{robot, "greeted", person, {}};
  graph.add_edge(edge);
  effect.added.push_back(std::move(edge));
  effect.clock_delta = map_.greet_duration;
  const double start = clock_;
  clock_ += map_.greet_duration;
  events_.push_back({call, start, clock_, 0.0, false, robot_room_});
  return effect;
}

std::string Simulator::event_log_json_lines() const {
  std::string out;
  for (const auto& e : events_) {
    nlohmann::json j{{"action", e.call.action}, {"args", e.call.args}, {"t_start", e.t_start},
                     {"t_end", e.t_end},        {"distance", e.distance}, {"canceled", e.canceled},
                     {"robot_room", e.robot_room}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace nlplan::sim
