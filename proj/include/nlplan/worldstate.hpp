#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nlplan/kgraph.hpp"

namespace nlplan::ws {

/// Where a knowledge item came from: a node id or an edge triple.
using ItemOrigin = std::variant<std::string, kg::EdgeKey>;

struct KnowledgeItem {
  std::string text;
  ItemOrigin origin;
  std::optional<std::vector<double>> vector;
};

std::string render_node(const kg::Node& node);
std::string render_edge(const kg::Edge& edge);

/// One item per node ("<id> is a <class> (k=v, ...)") followed by one per edge
/// ("<source> <relation> <target> (k=v, ...)"), both in id order.
std::vector<KnowledgeItem> render_items(const kg::KnowledgeGraph& graph);

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Anything that turns text into a fixed-dimension vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
  /// Stable identity used as part of embedding cache keys.
  virtual std::string embedder_id() const = 0;
};

/// Lowercased alphanumeric runs of `text`.
std::vector<std::string> word_tokens(std::string_view text);

/// Deterministic bag-of-words embedder: each token is FNV-1a hashed into one
/// of `dimension` buckets, counts are L2-normalized.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

  std::vector<double> embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string embedder_id() const override { return "hashing-bow-" + std::to_string(dimension_); }

  static std::uint64_t fnv1a(std::string_view token);

 private:
  std::size_t dimension_;
};

/// Normalizes in place. Returns false (leaving `v` untouched) for a zero vector.
bool l2_normalize(std::vector<double>& v);
double dot(const std::vector<double>& a, const std::vector<double>& b);

struct ScoredItem {
  const KnowledgeItem* item;
  double score;
};

/// Exact-scan in-memory vector store. Entries keep insertion order and may
/// repeat; each stored vector is unit-norm.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dimension) : dimension_(dimension) {}

  void add(KnowledgeItem item);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dimension() const { return dimension_; }
  const std::vector<KnowledgeItem>& entries() const { return entries_; }

  /// Top-k by cosine similarity to an already-embedded query. Descending
  /// score, ties by item text.
  std::vector<ScoredItem> nearest(const std::vector<double>& query, std::size_t k) const;

 private:
  std::size_t dimension_;
  std::vector<KnowledgeItem> entries_;
};

VectorIndex build_index(std::vector<KnowledgeItem> items, const Embedder& embedder);

std::vector<KnowledgeItem> retrieve(const VectorIndex& index, std::string_view query_text, std::size_t k,
                                    const Embedder& embedder);

struct WorldStateMode {
  enum class Kind { Full, Retrieved };
  Kind kind{Kind::Full};
  std::size_t k{0};

  static WorldStateMode full() { return {Kind::Full, 0}; }
  static WorldStateMode retrieved(std::size_t k) { return {Kind::Retrieved, k}; }
};

struct WorldState {
  std::vector<std::string> items;
  WorldStateMode mode;

  /// Items joined with newlines, no trailing newline.
  std::string joined() const;
};

WorldState build_world_state(const kg::KnowledgeGraph& graph, std::string_view goal_text, WorldStateMode mode,
                             const Embedder& embedder);

/// build_world_state with the embedded index cached. The cache key is the
/// rendered item list, so a revision bump that leaves the rendering unchanged
/// reuses the index. Thread-safe.
class WorldStateBuilder {
 public:
  explicit WorldStateBuilder(const Embedder& embedder) : embedder_(embedder) {}

  WorldState build(const kg::KnowledgeGraph& graph, std::string_view goal_text, WorldStateMode mode);
  std::size_t index_builds() const;

 private:
  const Embedder& embedder_;
  mutable std::mutex mutex_;
  std::vector<std::string> cached_texts_;
  std::shared_ptr<const VectorIndex> cached_index_;
  std::size_t builds_{0};
};

}  // namespace nlplan::ws
