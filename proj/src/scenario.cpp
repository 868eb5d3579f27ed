#include "nlplan/scenario.hpp"

namespace nlplan::scenario {

const std::vector<std::string>& persons() {
  static const std::vector<std::string> names{"miguel", "fran", "angel", "vicente"};
  return names;
}

const std::vector<std::string>& rooms() {
  static const std::vector<std::string> names{"entrance", "bathroom", "bedroom", "living_room"};
  return names;
}

kg::KnowledgeGraph apartment_graph(const sim::WorldMap& map) {
  kg::KnowledgeGraph g;
  g.add_node({"granny_house", "house", {}});
  for (const auto& room : rooms()) {
    g.add_node({room, "room", {{"waypoint", map.position(room)}}});
    g.add_edge({room, "in", "granny_house", {}});
  }
  const std::vector<std::string> where{"entrance", "bathroom", "bedroom", "living_room"};
  for (std::size_t i = 0; i < persons().size(); ++i) {
    g.add_node({persons()[i], "person", {}});
    g.add_edge({persons()[i], "at", where[i], {}});
  }
  g.add_node({"rb1", "robot", {}});
  g.add_edge({"rb1", "at", "entrance", {}});
  return g;
}

void place_robot(kg::KnowledgeGraph& graph, const std::string& room) {
  for (const auto& e : graph.match({std::string("rb1"), std::string("at"), std::nullopt})) graph.remove_edge(e.key());
  graph.add_edge({"rb1", "at", room, {}});
}

}  // namespace nlplan::scenario
