#include "nlplan/worldstate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace nlplan::ws {

namespace {

std::string render_properties(const kg::Properties& props) {
  if (props.empty()) return {};
  std::string out = " (";
  bool first = true;
  for (const auto& [key, value] : props) {
    if (!first) out += ", ";
    first = false;
    out += key;
    out += '=';
    out += kg::to_string(value);
  }
  out += ')';
  return out;
}

}  // namespace

std::string render_node(const kg::Node& node) {
  return node.id + " is a " + node.node_class + render_properties(node.properties);
}

std::string render_edge(const kg::Edge& edge) {
  return edge.source + " " + edge.relation + " " + edge.target + render_properties(edge.properties);
}

std::vector<KnowledgeItem> render_items(const kg::KnowledgeGraph& graph) {
  std::vector<KnowledgeItem> items;
  items.reserve(graph.node_count() + graph.edge_count());
  for (const auto& [id, node] : graph.nodes()) {
    items.push_back({render_node(node), id, std::nullopt});
  }
  for (const auto& [key, edge] : graph.edges()) {
    items.push_back({render_edge(edge), key, std::nullopt});
  }
  return items;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::uint64_t HashingEmbedder::fnv1a(std::string_view token) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& token : word_tokens(text)) {
    v[fnv1a(token) % dimension_] += 1.0;
  }
  l2_normalize(v);
  return v;
}

bool l2_normalize(std::vector<double>& v) {
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm == 0.0) return false;
  for (auto& x : v) x /= norm;
  return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

namespace {

std::vector<double> checked_embedding(const Embedder& embedder, std::string_view text, std::size_t dimension,
                                      bool allow_zero) {
  std::vector<double> v;
  try {
    v = embedder.embed(text);
  } catch (const EmbeddingError&) {
    throw;
  } catch (const std::exception& e) {
    throw EmbeddingError(std::string("embedding backend failed: ") + e.what());
  }
  if (v.size() != dimension) {
    throw EmbeddingError("embedding has dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(dimension));
  }
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
    throw EmbeddingError("embedding contains non-finite values");
  }
  if (!l2_normalize(v) && !allow_zero) {
    throw EmbeddingError("zero embedding for '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

void VectorIndex::add(KnowledgeItem item) {
  if (!item.vector || item.vector->size() != dimension_) {
    throw EmbeddingError("index entry '" + item.text + "' has no vector of dimension " + std::to_string(dimension_));
  }
  entries_.push_back(std::move(item));
}

std::vector<ScoredItem> VectorIndex::nearest(const std::vector<double>& query, std::size_t k) const {
  std::vector<ScoredItem> scored;
  scored.reserve(entries_.size());
  for (const auto& entry : entries_) scored.push_back({&entry, dot(*entry.vector, query)});
  auto better = [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item->text < b.item->text;
  };
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  scored.resize(take);
  return scored;
}

VectorIndex build_index(std::vector<KnowledgeItem> items, const Embedder& embedder) {
  VectorIndex index(embedder.dimension());
  for (auto& item : items) {
    item.vector = checked_embedding(embedder, item.text, index.dimension(), false);
    index.add(std::move(item));
  }
  return index;
}

std::vector<KnowledgeItem> retrieve(const VectorIndex& index, std::string_view query_text, std::size_t k,
                                    const Embedder& embedder) {
  if (k == 0) throw std::invalid_argument("retrieve: k must be at least 1");
  if (index.empty()) return {};
  const auto query = checked_embedding(embedder, query_text, index.dimension(), true);
  std::vector<KnowledgeItem> out;
  for (const auto& hit : index.nearest(query, k)) out.push_back(*hit.item);
  return out;
}

std::string WorldState::joined() const {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i != 0) out += '\n';
    out += items[i];
  }
  return out;
}

namespace {

WorldState full_state(std::vector<KnowledgeItem> items, WorldStateMode mode) {
  WorldState state{{}, mode};
  state.items.reserve(items.size());
  for (auto& item : items) state.items.push_back(std::move(item.text));
  return state;
}

WorldState retrieved_state(const VectorIndex& index, std::string_view goal_text, WorldStateMode mode,
                           const Embedder& embedder) {
  WorldState state{{}, mode};
  for (auto& item : retrieve(index, goal_text, mode.k, embedder)) state.items.push_back(std::move(item.text));
  return state;
}

}  // namespace

WorldState build_world_state(const kg::KnowledgeGraph& graph, std::string_view goal_text, WorldStateMode mode,
                             const Embedder& embedder) {
  auto items = render_items(graph);
  if (mode.kind == WorldStateMode::Kind::Full) return full_state(std::move(items), mode);
  const auto index = build_index(std::move(items), embedder);
  return retrieved_state(index, goal_text, mode, embedder);
}

WorldState WorldStateBuilder::build(const kg::KnowledgeGraph& graph, std::string_view goal_text,
                                    WorldStateMode mode) {
  auto items = render_items(graph);
  if (mode.kind == WorldStateMode::Kind::Full) return full_state(std::move(items), mode);

  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const auto& item : items) texts.push_back(item.text);

  std::shared_ptr<const VectorIndex> index;
  {
    std::lock_guard lock(mutex_);
    if (cached_index_ && cached_texts_ == texts) {
      index = cached_index_;
    }
  }
  if (!index) {
    index = std::make_shared<const VectorIndex>(build_index(std::move(items), embedder_));
    std::lock_guard lock(mutex_);
    cached_texts_ = std::move(texts);
    cached_index_ = index;
    ++builds_;
  }
  return retrieved_state(*index, goal_text, mode, embedder_);
}

std::size_t WorldStateBuilder::index_builds() const {
  std::lock_guard lock(mutex_);
  return builds_;
}

}  // namespace nlplan::ws
