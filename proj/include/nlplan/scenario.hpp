#pragma once

#include <string>
#include <vector>

#include "nlplan/kgraph.hpp"
#include "nlplan/sim.hpp"

namespace nlplan::scenario {

/// The greeting apartment: a house with four rooms (each carrying its map
/// waypoint), four people and robot rb1 at the entrance.
kg::KnowledgeGraph apartment_graph(const sim::WorldMap& map = sim::default_map());

/// Persons in the order miguel, fran, angel, vicente.
const std::vector<std::string>& persons();
/// Rooms in map order of the default apartment: entrance, bathroom, bedroom, living_room.
const std::vector<std::string>& rooms();

/// Moves the robot's `at` edge to `room`.
void place_robot(kg::KnowledgeGraph& graph, const std::string& room);

}  // namespace nlplan::scenario
