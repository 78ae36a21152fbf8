#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "support.hpp"

using namespace compat;
using testing_support::outfits_from_categories;

TEST(CooccurrenceGraph, Triangle) {
  const auto data = outfits_from_categories({{1, 2, 3}});
  const auto g = build_cooccurrence_graph(data.outfits, data.items);
  EXPECT_EQ(g.edges().size(), 3u);
  for (auto [a, b] : std::vector<CategoryPair>{{1, 2}, {1, 3}, {2, 3}}) {
    EXPECT_EQ(g.count(a, b), 1u);
    EXPECT_EQ(g.count(b, a), 1u);
  }
}

TEST(CooccurrenceGraph, DuplicateCategoryNoSelfLoop) {
  const auto data = outfits_from_categories({{1, 1, 2}});
  const auto g = build_cooccurrence_graph(data.outfits, data.items);
  ASSERT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.count(1, 2), 1u);
  EXPECT_EQ(g.count(1, 1), 0u);
}

TEST(CooccurrenceGraph, MatchesBruteForceTallyAndIsOrderInvariant) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto cats = testing_support::random_category_lists(gen, 50, 9, 1, 8);
    const auto data = outfits_from_categories(cats);
    const auto g = build_cooccurrence_graph(data.outfits, data.items);
    std::map<CategoryPair, std::size_t> tally;
    for (const auto& o : cats)
      for (CategoryId a = 0; a < 9; ++a)
        for (CategoryId b = a + 1; b < 9; ++b)
          if (std::count(o.begin(), o.end(), a) && std::count(o.begin(), o.end(), b))
            ++tally[{a, b}];
    ASSERT_EQ(g.edges(), tally);

    auto shuffled = data.outfits;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    ASSERT_EQ(build_cooccurrence_graph(shuffled, data.items).edges(), g.edges());
  }
}

TEST(CooccurrenceGraph, EdgeListRoundTrip) {
  const auto data = outfits_from_categories({{1, 2, 3}, {2, 3, 4}, {3, 4}});
  const auto g = build_cooccurrence_graph(data.outfits, data.items);
  const auto text = format_edge_list(g.edges());
  EXPECT_EQ(text, "1\t2\t1\n1\t3\t1\n2\t3\t2\n2\t4\t1\n3\t4\t2\n");
  EXPECT_EQ(parse_edge_list(text).edges(), g.edges());
  EXPECT_THROW(parse_edge_list("1\t2\n"), ParseError);
}

TEST(Subgraph, TwoNodesOneEdge) {
  const auto train = outfits_from_categories({{5, 9}});
  const auto g = build_cooccurrence_graph(train.outfits, train.items);
  const auto s = extract_subgraph(train.outfits[0], train.items, g);
  ASSERT_EQ(s.nodes.size(), 2u);
  EXPECT_EQ(s.edge_count(), 1u);
}

TEST(Subgraph, UnseenCategoryIsIsolated) {
  const auto train = outfits_from_categories({{1, 2}});
  const auto g = build_cooccurrence_graph(train.outfits, train.items);
  const auto query = outfits_from_categories({{1, 2, 77}});
  const auto s = extract_subgraph(query.outfits[0], query.items, g);
  ASSERT_EQ(s.nodes.size(), 3u);
  EXPECT_EQ(s.nodes[2].category, 77);
  EXPECT_TRUE(s.neighbors[2].empty());
  EXPECT_EQ(s.edge_count(), 1u);
}

TEST(Subgraph, DuplicateCategoryItemsShareANode) {
  const auto data = outfits_from_categories({{4, 4, 2}});
  const auto g = build_cooccurrence_graph(data.outfits, data.items);
  const auto s = extract_subgraph(data.outfits[0], data.items, g);
  ASSERT_EQ(s.nodes.size(), 2u);
  EXPECT_EQ(s.nodes[1].item_ids, (std::vector<std::string>{"s0_1", "s0_2"}));
}

TEST(Subgraph, InducedEdgesEqualFilteredGlobalList) {
  std::mt19937_64 gen(2);
  const auto train =
      outfits_from_categories(testing_support::random_category_lists(gen, 40, 15, 2, 5));
  const auto g = build_cooccurrence_graph(train.outfits, train.items);
  const auto queries =
      outfits_from_categories(testing_support::random_category_lists(gen, 100, 18, 1, 8));
  for (const auto& o : queries.outfits) {
    const auto s = extract_subgraph(o, queries.items, g);
    std::set<CategoryId> active;
    for (const auto& n : s.nodes) active.insert(n.category);
    std::vector<CategoryPair> expected;
    for (const auto& [pair, n] : g.edges())
      if (active.count(pair.first) && active.count(pair.second)) expected.push_back(pair);
    ASSERT_EQ(s.edges(), expected);
  }
}

TEST(Hypergraph, TwoHyperedgesFourVertices) {
  const auto data = outfits_from_categories({{1, 2, 3}, {2, 3, 4}});
  const auto h = build_hypergraph(data.outfits, data.items);
  EXPECT_EQ(h.hyperedges.size(), 2u);
  EXPECT_EQ(h.vertices.size(), 4u);
  EXPECT_EQ(h.dropped, 0u);
}

TEST(Hypergraph, SingleCategoryOutfitDropped) {
  const auto data = outfits_from_categories({{5, 5, 5}, {1, 2}});
  const auto h = build_hypergraph(data.outfits, data.items);
  EXPECT_EQ(h.hyperedges.size(), 1u);
  EXPECT_EQ(h.dropped, 1u);
}

TEST(Hypergraph, DegreeEqualsOutfitCount) {
  SyntheticConfig sc;
  sc.n_outfits = 300;
  const auto ds = generate_synthetic(sc);
  const auto h = build_hypergraph(ds.data.outfits, ds.data.items);
  std::map<CategoryId, std::size_t> per_category;
  for (const auto& o : ds.data.outfits) {
    std::set<CategoryId> cats;
    for (const auto& id : o.items) cats.insert(ds.data.items.at(id).category_id);
    for (auto c : cats) ++per_category[c];
  }
  for (const auto& [c, n] : per_category) EXPECT_EQ(h.degree(c), n);
}

TEST(ConvertHyperedge, PairAndTriple) {
  const std::vector<CategoryId> pair{7, 3};
  const auto a = convert_hyperedge(pair);
  EXPECT_EQ(a.keys, (std::array<CategoryId, 2>{3, 7}));
  EXPECT_TRUE(a.mediators.empty());
  EXPECT_EQ(a.edges.size(), 1u);

  const std::vector<CategoryId> triple{1, 2, 3};
  const auto b = convert_hyperedge(triple);
  EXPECT_EQ(b.keys, (std::array<CategoryId, 2>{1, 2}));
  EXPECT_EQ(b.mediators, (std::vector<CategoryId>{3}));
  std::set<CategoryPair> edges(b.edges.begin(), b.edges.end());
  EXPECT_EQ(edges, (std::set<CategoryPair>{{1, 2}, {1, 3}, {2, 3}}));
}

TEST(ConvertHyperedge, DegenerateIsStructuralError) {
  const std::vector<CategoryId> one{4, 4};
  EXPECT_THROW(convert_hyperedge(one), StructuralError);
}

TEST(ConvertHyperedge, SizeFourByEnumeration) {
  const std::vector<CategoryId> e{10, 20, 30, 40};
  const auto c = convert_hyperedge(e);
  std::set<CategoryPair> expected{{10, 20}};
  for (CategoryId m : {30, 40}) {
    expected.insert(ordered_pair(m, 10));
    expected.insert(ordered_pair(m, 20));
  }
  EXPECT_EQ(std::set<CategoryPair>(c.edges.begin(), c.edges.end()), expected);
  EXPECT_EQ(c.edges.size(), 5u);
}

TEST(ConvertHyperedge, EdgeCountAndLocalDegreesForRandomSizes) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + trial % 7;
    std::set<CategoryId> v;
    while (v.size() < k) v.insert(static_cast<CategoryId>(gen() % 500));
    std::vector<CategoryId> e(v.begin(), v.end());
    std::shuffle(e.begin(), e.end(), gen);
    const auto c = convert_hyperedge(e);
    ASSERT_EQ(c.edges.size(), 2 * (k - 2) + 1);
    ASSERT_EQ(c.mediators.size(), k - 2);
    std::set<CategoryPair> distinct(c.edges.begin(), c.edges.end());
    ASSERT_EQ(distinct.size(), c.edges.size());
    std::map<CategoryId, std::size_t> degree;
    for (auto [a, b] : c.edges) {
      ASSERT_NE(a, b);
      ++degree[a];
      ++degree[b];
    }
    for (CategoryId m : c.mediators) ASSERT_EQ(degree[m], 2u);
    for (CategoryId key : c.keys) ASSERT_EQ(degree[key], (k - 2) + 1);
  }
}

TEST(ConvertHypergraph, MultiplicityAndSummation) {
  Hypergraph one;
  one.hyperedges = {{1, 2, 3}};
  EXPECT_EQ(convert_hypergraph(one).edge_multiplicity.size(), 3u);

  Hypergraph twice;
  twice.hyperedges = {{1, 2, 3}, {1, 2, 3}};
  const auto g = convert_hypergraph(twice);
  EXPECT_EQ(g.edge_multiplicity.size(), 3u);
  for (const auto& [e, n] : g.edge_multiplicity) EXPECT_EQ(n, 2u);

  SyntheticConfig sc;
  sc.n_outfits = 200;
  const auto ds = generate_synthetic(sc);
  const auto h = build_hypergraph(ds.data.outfits, ds.data.items);
  const auto conv = convert_hypergraph(h);
  std::size_t expected = 0;
  for (const auto& e : h.hyperedges) expected += 2 * (e.size() - 2) + 1;
  EXPECT_EQ(conv.pre_merge_edge_count(), expected);
  std::size_t merged = 0;
  for (const auto& [e, n] : conv.edge_multiplicity) {
    EXPECT_NE(e.first, e.second);
    merged += n;
  }
  EXPECT_EQ(merged, expected);
}

TEST(KeySelection, MostFrequentAlternative) {
  Hypergraph h;
  h.hyperedges = {{1, 5, 9}, {5, 9}, {5, 9, 12}};
  const auto select = most_frequent_keys(h);
  const std::vector<CategoryId> e{1, 5, 9};
  const auto c = convert_hyperedge(e, select);
  EXPECT_EQ(c.keys, (std::array<CategoryId, 2>{5, 9}));
  EXPECT_EQ(c.mediators, (std::vector<CategoryId>{1}));
}

TEST(HyperedgeStructure, TriangleForThreeCategories) {
  const auto data = outfits_from_categories({{8, 3, 5}});
  const auto s = hyperedge_structure(data.outfits[0], data.items);
  EXPECT_EQ(s.edges(), (std::vector<CategoryPair>{{3, 5}, {3, 8}, {5, 8}}));
  const auto flat = outfits_from_categories({{3, 3}});
  EXPECT_THROW(hyperedge_structure(flat.outfits[0], flat.items), ModelError);
}
