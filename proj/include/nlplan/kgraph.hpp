#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace nlplan::kg {

struct Coord2 {
  double x{0.0};
  double y{0.0};
  friend bool operator==(const Coord2&, const Coord2&) = default;
};

struct Coord3 {
  double x{0.0};
  double y{0.0};
  double z{0.0};
  friend bool operator==(const Coord3&, const Coord3&) = default;
};

/// Property values carried by nodes and edges. Numbers and coordinates must
/// be finite; the graph rejects anything else on insert.
using PropertyValue = std::variant<std::string, double, bool, Coord2, Coord3>;
using Properties = std::map<std::string, PropertyValue>;

bool is_finite(const PropertyValue& value);

/// Renders a value the way knowledge items show it: strings bare, numbers in
/// shortest round-trip form, booleans as true/false, coordinates as (x, y).
std::string to_string(const PropertyValue& value);

struct Node {
  std::string id;
  std::string node_class;
  Properties properties;
  friend bool operator==(const Node&, const Node&) = default;
};

struct EdgeKey {
  std::string source;
  std::string relation;
  std::string target;
  friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

struct Edge {
  std::string source;
  std::string relation;
  std::string target;
  Properties properties;

  EdgeKey key() const { return {source, relation, target}; }
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Triple pattern; an empty optional is a wildcard.
struct Pattern {
  std::optional<std::string> source;
  std::optional<std::string> relation;
  std::optional<std::string> target;
};

class GraphError : public std::runtime_error {
 public:
  enum class Kind { DuplicateId, DanglingEndpoint, DuplicateEdge, NotFound, InvalidNode, InvalidValue, Format };

  GraphError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Typed property graph. Nodes and edges are kept in ordered maps so every
/// iteration is lexicographic. Const member functions may be called
/// concurrently; mutations need exclusive access.
class KnowledgeGraph {
 public:
  void add_node(Node node);
  void add_edge(Edge edge);
  void remove_edge(const std::string& source, const std::string& relation, const std::string& target);
  void remove_edge(const EdgeKey& key) { remove_edge(key.source, key.relation, key.target); }

  /// Replaces the properties of an existing node.
  void set_node_properties(const std::string& id, Properties properties);

  bool has_node(const std::string& id) const { return nodes_.count(id) != 0; }
  bool has_edge(const EdgeKey& key) const { return edges_.count(key) != 0; }
  const Node* find_node(const std::string& id) const;
  const Edge* find_edge(const EdgeKey& key) const;

  /// Edges matching the concrete parts of the pattern, ordered by
  /// (source, relation, target).
  std::vector<Edge> match(const Pattern& pattern) const;

  const std::map<std::string, Node>& nodes() const { return nodes_; }
  const std::map<EdgeKey, Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::uint64_t revision() const { return revision_; }

  /// Immutable copy tagged with the current revision.
  std::shared_ptr<const KnowledgeGraph> snapshot() const { return std::make_shared<const KnowledgeGraph>(*this); }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  std::map<std::string, Node> nodes_;
  std::map<EdgeKey, Edge> edges_;
  std::uint64_t revision_{0};
};

// Serialization. The JSON document is
// {"nodes":[{"id","class","properties"}],"edges":[{"source","relation","target","properties"}]}
// with coordinates encoded as 2- or 3-element number arrays.
std::string to_json(const KnowledgeGraph& graph, int indent = 2);
KnowledgeGraph from_json(const std::string& text);

// Line format, one record per line:
//   node <id> <class> [<properties-json-object>]
//   edge <source> <relation> <target> [<properties-json-object>]
// Blank lines and lines starting with '#' are ignored.
std::string to_text(const KnowledgeGraph& graph);
KnowledgeGraph from_text(const std::string& text);

/// Loads either format, choosing by the first non-space character.
KnowledgeGraph load_graph_file(const std::string& path);
void save_graph_file(const KnowledgeGraph& graph, const std::string& path);

}  // namespace nlplan::kg
