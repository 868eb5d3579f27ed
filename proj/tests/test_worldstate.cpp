#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "nlplan/scenario.hpp"
#include "nlplan/worldstate.hpp"
#include "reference_embedder.hpp"

namespace {

using namespace nlplan;
using namespace nlplan::ws;
using nlplan::oracle::bucket_counts;
using nlplan::oracle::reference_cosine;

TEST(Render, ItemFormats) {
  EXPECT_EQ(render_node({"rb1", "robot", {}}), "rb1 is a robot");
  EXPECT_EQ(render_edge({"angel", "at", "bedroom", {}}), "angel at bedroom");
  EXPECT_EQ(render_node({"bedroom", "room", {{"waypoint", kg::Coord2{4, 3}}, {"area", 12.0}}}),
            "bedroom is a room (area=12, waypoint=(4, 3))");
  EXPECT_EQ(render_edge({"rb1", "greeted", "angel", {{"at", 3.5}}}), "rb1 greeted angel (at=3.5)");
}

TEST(Render, ApartmentHasNineteenItems) {
  const auto items = render_items(scenario::apartment_graph());
  ASSERT_EQ(items.size(), 19u);
  EXPECT_EQ(std::count_if(items.begin(), items.end(),
                          [](const KnowledgeItem& i) { return std::holds_alternative<std::string>(i.origin); }),
            10);
  EXPECT_EQ(items.front().text, "angel is a person");
  EXPECT_EQ(items[10].text, "angel at bedroom");
}

TEST(Render, OriginsAreUnique) {
  const auto g = scenario::apartment_graph();
  std::set<std::string> nodes;
  std::set<kg::EdgeKey> edges;
  for (const auto& item : render_items(g)) {
    if (auto* id = std::get_if<std::string>(&item.origin)) {
      EXPECT_TRUE(nodes.insert(*id).second);
      EXPECT_TRUE(g.has_node(*id));
    } else {
      const auto& key = std::get<kg::EdgeKey>(item.origin);
      EXPECT_TRUE(edges.insert(key).second);
      EXPECT_TRUE(g.has_edge(key));
    }
  }
}

TEST(Embedder, Basics) {
  HashingEmbedder e;
  EXPECT_EQ(e.dimension(), 256u);
  const auto v = e.embed("Angel at the BEDROOM, angel!");
  EXPECT_EQ(v, e.embed("Angel at the BEDROOM, angel!"));
  double norm = 0;
  for (double x : v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(word_tokens("Angel at the BEDROOM, angel!"),
            (std::vector<std::string>{"angel", "at", "the", "bedroom", "angel"}));
  // FNV-1a 64-bit reference values.
  EXPECT_EQ(HashingEmbedder::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(HashingEmbedder::fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Embedder, OverlapOrdering) {
  HashingEmbedder e;
  const auto a = e.embed("angel");
  EXPECT_GT(dot(a, e.embed("angel at bedroom")), dot(a, e.embed("rb1 is a robot")));
  EXPECT_NEAR(dot(a, e.embed("angel at bedroom")), 1.0 / std::sqrt(3.0), 1e-12);
}

TEST(Index, BuildAndDuplicates) {
  HashingEmbedder e;
  auto items = render_items(scenario::apartment_graph());
  EXPECT_EQ(build_index(items, e).size(), 19u);
  EXPECT_TRUE(build_index({}, e).empty());
  items.push_back(items.front());
  EXPECT_EQ(build_index(items, e).size(), 20u);
  const auto index = build_index(items, e);
  for (const auto& entry : index.entries()) {
    ASSERT_TRUE(entry.vector.has_value());
    double norm = 0;
    for (double x : *entry.vector) norm += x * x;
    EXPECT_NEAR(norm, 1.0, 1e-6);
  }
}

TEST(Retrieve, Cardinality) {
  HashingEmbedder e;
  const auto index = build_index(render_items(scenario::apartment_graph()), e);
  EXPECT_EQ(retrieve(index, "greet angel", 10, e).size(), 10u);
  EXPECT_EQ(retrieve(index, "greet angel", 25, e).size(), 19u);
  EXPECT_THROW(retrieve(index, "greet angel", 0, e), std::invalid_argument);
}

TEST(Retrieve, PersonItemsMatchBruteForce) {
  HashingEmbedder e;
  const auto items = render_items(scenario::apartment_graph());
  const auto index = build_index(items, e);
  for (const auto& person : scenario::persons()) {
    const auto query = "greet " + person;
    const auto got = retrieve(index, query, 10, e);
    std::vector<std::string> got_texts;
    for (const auto& i : got) got_texts.push_back(i.text);

    // Brute-force scan over all items.
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& i : items) scored.emplace_back(reference_cosine(query, i.text), i.text);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<std::string> expected;
    for (std::size_t k = 0; k < 10; ++k) expected.push_back(scored[k].second);
    EXPECT_EQ(got_texts, expected) << query;

    for (const auto& want : {person + " is a person", person + " at "}) {
      EXPECT_TRUE(std::any_of(got_texts.begin(), got_texts.end(),
                              [&](const std::string& t) { return t.rfind(want, 0) == 0; }))
          << query << " misses " << want;
    }
  }
}

TEST(RetrieveProperty, SubsetOrderedPermutation) {
  std::mt19937_64 rng(5);
  HashingEmbedder e;
  const std::vector<std::string> words{"angel", "bedroom", "rb1", "greet", "person", "room", "kitchen", "at"};
  for (int trial = 0; trial < 40; ++trial) {
    kg::KnowledgeGraph g;
    const auto n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) g.add_node({"n" + std::to_string(i), words[rng() % words.size()], {}});
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = "n" + std::to_string(rng() % n);
      const auto t = "n" + std::to_string(rng() % n);
      const auto r = words[rng() % words.size()];
      if (!g.has_edge({s, r, t})) g.add_edge({s, r, t, {}});
    }
    const auto items = render_items(g);
    ASSERT_EQ(items.size(), g.node_count() + g.edge_count());
    const auto index = build_index(items, e);
    const std::string query = words[rng() % words.size()] + " " + words[rng() % words.size()];
    const auto k = 1 + rng() % (items.size() + 2);
    const auto scored = index.nearest(e.embed(query), k);
    ASSERT_EQ(scored.size(), std::min<std::size_t>(k, items.size()));
    for (std::size_t i = 1; i < scored.size(); ++i) EXPECT_GE(scored[i - 1].score, scored[i].score);
    std::multiset<std::string> all, got;
    for (const auto& i : items) all.insert(i.text);
    for (const auto& s : scored) {
      EXPECT_TRUE(all.count(s.item->text));
      got.insert(s.item->text);
    }
    const auto full = retrieve(index, query, items.size(), e);
    std::multiset<std::string> perm;
    for (const auto& i : full) perm.insert(i.text);
    EXPECT_EQ(perm, all);
  }
}

TEST(WorldStateTest, Modes) {
  HashingEmbedder e;
  const auto g = scenario::apartment_graph();
  const auto full = build_world_state(g, "greet the person angel", WorldStateMode::full(), e);
  EXPECT_EQ(full.items.size(), 19u);
  const auto rag = build_world_state(g, "greet the person angel", WorldStateMode::retrieved(10), e);
  EXPECT_EQ(rag.items.size(), 10u);
  EXPECT_EQ(build_world_state(kg::KnowledgeGraph{}, "x", WorldStateMode::retrieved(10), e).items.size(), 0u);
  EXPECT_EQ(build_world_state(kg::KnowledgeGraph{}, "x", WorldStateMode::full(), e).items.size(), 0u);
  EXPECT_EQ(rag.joined(), build_world_state(g, "greet the person angel", WorldStateMode::retrieved(10), e).joined());
  const auto joined = full.joined();
  EXPECT_NE(joined.back(), '\n');
  EXPECT_EQ(std::count(joined.begin(), joined.end(), '\n'), 18);
}

TEST(WorldStateTest, BuilderCachesByRendering) {
  HashingEmbedder e;
  WorldStateBuilder builder(e);
  auto g = scenario::apartment_graph();
  const auto first = builder.build(g, "greet the person angel", WorldStateMode::retrieved(10));
  builder.build(g, "greet the person fran", WorldStateMode::retrieved(10));
  EXPECT_EQ(builder.index_builds(), 1u);
  g.remove_edge("rb1", "at", "entrance");
  g.add_edge({"rb1", "at", "bedroom", {}});
  builder.build(g, "greet the person angel", WorldStateMode::retrieved(10));
  EXPECT_EQ(builder.index_builds(), 2u);
  g.remove_edge("rb1", "at", "bedroom");
  g.add_edge({"rb1", "at", "entrance", {}});
  const auto again = builder.build(g, "greet the person angel", WorldStateMode::retrieved(10));
  EXPECT_EQ(again.items, first.items);
  EXPECT_EQ(builder.build(g, "", WorldStateMode::full()).items.size(), 19u);
}

}  // namespace
