#include "nlplan/kgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nlplan::kg {

using json = nlohmann::json;

bool is_finite(const PropertyValue& value) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return std::isfinite(v);
        } else if constexpr (std::is_same_v<T, Coord2>) {
          return std::isfinite(v.x) && std::isfinite(v.y);
        } else if constexpr (std::is_same_v<T, Coord3>) {
          return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
        } else {
          return true;
        }
      },
      value);
}

namespace {

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void check_properties(const Properties& props, const std::string& owner) {
  for (const auto& [key, value] : props) {
    if (key.empty()) {
      throw GraphError(GraphError::Kind::InvalidValue, "empty property key on " + owner);
    }
    if (!is_finite(value)) {
      throw GraphError(GraphError::Kind::InvalidValue, "non-finite property '" + key + "' on " + owner);
    }
  }
}

std::string edge_name(const EdgeKey& k) { return "(" + k.source + ", " + k.relation + ", " + k.target + ")"; }

}  // namespace

std::string to_string(const PropertyValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, double>) {
          return format_number(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, Coord2>) {
          return "(" + format_number(v.x) + ", " + format_number(v.y) + ")";
        } else {
          return "(" + format_number(v.x) + ", " + format_number(v.y) + ", " + format_number(v.z) + ")";
        }
      },
      value);
}

void KnowledgeGraph::add_node(Node node) {
  if (node.id.empty()) {
    throw GraphError(GraphError::Kind::InvalidNode, "node id must not be empty");
  }
  if (node.node_class.empty()) {
    throw GraphError(GraphError::Kind::InvalidNode, "node '" + node.id + "' has no class");
  }
  if (nodes_.count(node.id) != 0) {
    throw GraphError(GraphError::Kind::DuplicateId, "duplicate node id '" + node.id + "'");
  }
  check_properties(node.properties, "node '" + node.id + "'");
  auto id = node.id;
  nodes_.emplace(std::move(id), std::move(node));
  ++revision_;
}

void KnowledgeGraph::add_edge(Edge edge) {
  const auto key = edge.key();
  if (edge.relation.empty()) {
    throw GraphError(GraphError::Kind::InvalidValue, "edge " + edge_name(key) + " has no relation");
  }
  for (const auto* endpoint : {&edge.source, &edge.target}) {
    if (nodes_.count(*endpoint) == 0) {
      throw GraphError(GraphError::Kind::DanglingEndpoint,
                       "edge " + edge_name(key) + " references unknown node '" + *endpoint + "'");
    }
  }
  if (edges_.count(key) != 0) {
    throw GraphError(GraphError::Kind::DuplicateEdge, "duplicate edge " + edge_name(key));
  }
  check_properties(edge.properties, "edge " + edge_name(key));
  edges_.emplace(key, std::move(edge));
  ++revision_;
}

void KnowledgeGraph::remove_edge(const std::string& source, const std::string& relation, const std::string& target) {
  const EdgeKey key{source, relation, target};
  auto it = edges_.find(key);
  if (it == edges_.end()) {
    throw GraphError(GraphError::Kind::NotFound, "no edge " + edge_name(key));
  }
  edges_.erase(it);
  ++revision_;
}

void KnowledgeGraph::set_node_properties(const std::string& id, Properties properties) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw GraphError(GraphError::Kind::NotFound, "no node '" + id + "'");
  }
  check_properties(properties, "node '" + id + "'");
  it->second.properties = std::move(properties);
  ++revision_;
}

const Node* KnowledgeGraph::find_node(const std::string& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Edge* KnowledgeGraph::find_edge(const EdgeKey& key) const {
  auto it = edges_.find(key);
  return it == edges_.end() ? nullptr : &it->second;
}

std::vector<Edge> KnowledgeGraph::match(const Pattern& pattern) const {
  std::vector<Edge> out;
  auto matches = [&](const Edge& e) {
    return (!pattern.relation || *pattern.relation == e.relation) && (!pattern.target || *pattern.target == e.target);
  };
  if (pattern.source) {
    // Keys sort by source first, so a bounded range scan is enough.
    auto it = edges_.lower_bound(EdgeKey{*pattern.source, "", ""});
    for (; it != edges_.end() && it->first.source == *pattern.source; ++it) {
      if (matches(it->second)) out.push_back(it->second);
    }
    return out;
  }
  for (const auto& [key, edge] : edges_) {
    if (matches(edge)) out.push_back(edge);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json value_to_json(const PropertyValue& value) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Coord2>) {
          return json::array({v.x, v.y});
        } else if constexpr (std::is_same_v<T, Coord3>) {
          return json::array({v.x, v.y, v.z});
        } else {
          return json(v);
        }
      },
      value);
}

PropertyValue value_from_json(const json& j, const std::string& key) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && (j.size() == 2 || j.size() == 3)) {
    if (std::all_of(j.begin(), j.end(), [](const json& c) { return c.is_number(); })) {
      if (j.size() == 2) return Coord2{j[0].get<double>(), j[1].get<double>()};
      return Coord3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    }
  }
  throw GraphError(GraphError::Kind::Format, "unsupported value for property '" + key + "': " + j.dump());
}

json props_to_json(const Properties& props) {
  json out = json::object();
  for (const auto& [k, v] : props) out[k] = value_to_json(v);
  return out;
}

Properties props_from_json(const json& j) {
  Properties props;
  if (j.is_null()) return props;
  if (!j.is_object()) {
    throw GraphError(GraphError::Kind::Format, "properties must be an object, got " + j.dump());
  }
  for (const auto& [k, v] : j.items()) props.emplace(k, value_from_json(v, k));
  return props;
}

std::string required_string(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field) || !j.at(field).is_string()) {
    throw GraphError(GraphError::Kind::Format, std::string("missing string field '") + field + "' in " + j.dump());
  }
  return j.at(field).get<std::string>();
}

}  // namespace

std::string to_json(const KnowledgeGraph& graph, int indent) {
  json doc;
  doc["nodes"] = json::array();
  doc["edges"] = json::array();
  for (const auto& [id, node] : graph.nodes()) {
    doc["nodes"].push_back({{"id", node.id}, {"class", node.node_class}, {"properties", props_to_json(node.properties)}});
  }
  for (const auto& [key, edge] : graph.edges()) {
    doc["edges"].push_back({{"source", edge.source},
                            {"relation", edge.relation},
                            {"target", edge.target},
                            {"properties", props_to_json(edge.properties)}});
  }
  return doc.dump(indent) + "\n";
}

KnowledgeGraph from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphError(GraphError::Kind::Format, std::string("graph JSON: ") + e.what());
  }
  if (!doc.is_object()) throw GraphError(GraphError::Kind::Format, "graph JSON must be an object");
  KnowledgeGraph graph;
  if (doc.contains("nodes")) {
    for (const auto& n : doc.at("nodes")) {
      graph.add_node({required_string(n, "id"), required_string(n, "class"),
                      props_from_json(n.value("properties", json::object()))});
    }
  }
  if (doc.contains("edges")) {
    for (const auto& e : doc.at("edges")) {
      graph.add_edge({required_string(e, "source"), required_string(e, "relation"), required_string(e, "target"),
                      props_from_json(e.value("properties", json::object()))});
    }
  }
  return graph;
}

std::string to_text(const KnowledgeGraph& graph) {
  std::ostringstream out;
  for (const auto& [id, node] : graph.nodes()) {
    out << "node " << node.id << ' ' << node.node_class;
    if (!node.properties.empty()) out << ' ' << props_to_json(node.properties).dump();
    out << '\n';
  }
  for (const auto& [key, edge] : graph.edges()) {
    out << "edge " << edge.source << ' ' << edge.relation << ' ' << edge.target;
    if (!edge.properties.empty()) out << ' ' << props_to_json(edge.properties).dump();
    out << '\n';
  }
  return out.str();
}

KnowledgeGraph from_text(const std::string& text) {
  KnowledgeGraph graph;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line.substr(first));
    std::string kind;
    fields >> kind;
    auto rest = [&fields]() {
      std::string tail;
      std::getline(fields, tail);
      auto p = tail.find_first_not_of(" \t");
      return p == std::string::npos ? std::string{} : tail.substr(p);
    };
    auto fail = [&](const std::string& why) {
      throw GraphError(GraphError::Kind::Format, "line " + std::to_string(line_no) + ": " + why);
    };
    auto parse_props = [&](const std::string& tail) {
      if (tail.empty()) return Properties{};
      try {
        return props_from_json(json::parse(tail));
      } catch (const json::parse_error& e) {
        fail(std::string("bad properties: ") + e.what());
      }
      return Properties{};
    };
    if (kind == "node") {
      std::string id, cls;
      if (!(fields >> id >> cls)) fail("expected 'node <id> <class>'");
      graph.add_node({id, cls, parse_props(rest())});
    } else if (kind == "edge") {
      std::string s, r, t;
      if (!(fields >> s >> r >> t)) fail("expected 'edge <source> <relation> <target>'");
      graph.add_edge({s, r, t, parse_props(rest())});
    } else {
      fail("unknown record '" + kind + "'");
    }
  }
  return graph;
}

KnowledgeGraph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GraphError(GraphError::Kind::Format, "cannot open graph file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return from_json(text);
  return from_text(text);
}

void save_graph_file(const KnowledgeGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw GraphError(GraphError::Kind::Format, "cannot write graph file '" + path + "'");
  const bool as_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  out << (as_json ? to_json(graph) : to_text(graph));
}

}  // namespace nlplan::kg
