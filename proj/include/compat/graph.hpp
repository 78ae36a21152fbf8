#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compat/dataset.hpp"
#include "compat/error.hpp"

namespace compat {

using CategoryPair = std::pair<CategoryId, CategoryId>;  // always (smaller, larger)

inline CategoryPair ordered_pair(CategoryId a, CategoryId b) {
  return a < b ? CategoryPair{a, b} : CategoryPair{b, a};
}

// Distinct categories of an outfit, ascending.
inline std::vector<CategoryId> outfit_categories(const Outfit& outfit, const ItemTable& items) {
  std::vector<CategoryId> cats;
  for (const auto& id : outfit.items) cats.push_back(items.at(id).category_id);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  return cats;
}

// ---------------------------------------------------------------------------
// Category co-occurrence graph

class CategoryGraph {
 public:
  void add_node(CategoryId c) { nodes_.insert(c); }

  void add_cooccurrence(CategoryId a, CategoryId b, std::size_t n = 1) {
    if (a == b) return;
    nodes_.insert(a);
    nodes_.insert(b);
    counts_[ordered_pair(a, b)] += n;
    adjacency_[a].insert(b);
    adjacency_[b].insert(a);
  }

  const std::set<CategoryId>& nodes() const noexcept { return nodes_; }
  const std::map<CategoryPair, std::size_t>& edges() const noexcept { return counts_; }

  std::size_t count(CategoryId a, CategoryId b) const {
    auto it = counts_.find(ordered_pair(a, b));
    return it == counts_.end() ? 0 : it->second;
  }

  bool has_edge(CategoryId a, CategoryId b) const { return count(a, b) > 0; }

  std::size_t degree(CategoryId c) const {
    auto it = adjacency_.find(c);
    return it == adjacency_.end() ? 0 : it->second.size();
  }

 private:
  std::set<CategoryId> nodes_;
  std::map<CategoryPair, std::size_t> counts_;
  std::map<CategoryId, std::set<CategoryId>> adjacency_;
};

inline CategoryGraph build_cooccurrence_graph(const std::vector<Outfit>& outfits,
                                              const ItemTable& items) {
  CategoryGraph g;
  for (const Outfit& o : outfits) {
    const auto cats = outfit_categories(o, items);
    for (CategoryId c : cats) g.add_node(c);
    for (std::size_t i = 0; i < cats.size(); ++i)
      for (std::size_t j = i + 1; j < cats.size(); ++j) g.add_cooccurrence(cats[i], cats[j]);
  }
  return g;
}

// `cat_a<TAB>cat_b<TAB>count`, sorted by (cat_a, cat_b).
inline std::string format_edge_list(const std::map<CategoryPair, std::size_t>& edges) {
  std::string out;
  for (const auto& [pair, n] : edges)
    out += std::to_string(pair.first) + '\t' + std::to_string(pair.second) + '\t' +
           std::to_string(n) + '\n';
  return out;
}

inline CategoryGraph parse_edge_list(std::string_view text) {
  CategoryGraph g;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    ++line_no;
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string line(text.substr(start, end - start));
    if (!line.empty()) {
      long long a = 0, b = 0;
      unsigned long long n = 0;
      char extra = 0;
      if (std::sscanf(line.c_str(), "%lld\t%lld\t%llu%c", &a, &b, &n, &extra) != 3 || n == 0)
        throw ParseError("bad edge-list line " + std::to_string(line_no), start);
      g.add_cooccurrence(a, b, n);
    }
    start = end + 1;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Per-outfit structure shared by both models

struct GraphNode {
  CategoryId category = 0;
  std::vector<std::string> item_ids;  // sorted, so aggregation order is canonical
};

// Nodes sorted by category id; `neighbors[i]` lists node indices adjacent to
// node i in ascending order. Edges are undirected and self-loop free.
struct OutfitStructure {
  std::vector<GraphNode> nodes;
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& n : neighbors) twice += n.size();
    return twice / 2;
  }

  std::vector<CategoryPair> edges() const {
    std::vector<CategoryPair> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t j : neighbors[i])
        if (i < j) out.push_back(ordered_pair(nodes[i].category, nodes[j].category));
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

inline OutfitStructure group_by_category(const Outfit& outfit, const ItemTable& items) {
  std::map<CategoryId, std::vector<std::string>> groups;
  for (const auto& id : outfit.items) groups[items.at(id).category_id].push_back(id);
  OutfitStructure s;
  for (auto& [cat, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    s.nodes.push_back({cat, std::move(ids)});
  }
  s.neighbors.resize(s.nodes.size());
  return s;
}

inline void connect(OutfitStructure& s, const std::vector<CategoryPair>& edges) {
  auto node_of = [&](CategoryId c) {
    auto it = std::lower_bound(s.nodes.begin(), s.nodes.end(), c,
                               [](const GraphNode& n, CategoryId v) { return n.category < v; });
    return static_cast<std::size_t>(it - s.nodes.begin());
  };
  for (const auto& [a, b] : edges) {
    const auto i = node_of(a), j = node_of(b);
    s.neighbors[i].push_back(j);
    s.neighbors[j].push_back(i);
  }
  for (auto& n : s.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
}

}  // namespace detail

// Active nodes are the outfit's categories; edges are the co-occurrence
// edges among them. Categories absent from the graph stay as isolated nodes.
inline OutfitStructure extract_subgraph(const Outfit& outfit, const ItemTable& items,
                                        const CategoryGraph& graph) {
  OutfitStructure s = detail::group_by_category(outfit, items);
  std::vector<CategoryPair> edges;
  for (std::size_t i = 0; i < s.nodes.size(); ++i)
    for (std::size_t j = i + 1; j < s.nodes.size(); ++j)
      if (graph.has_edge(s.nodes[i].category, s.nodes[j].category))
        edges.push_back(ordered_pair(s.nodes[i].category, s.nodes[j].category));
  detail::connect(s, edges);
  return s;
}

// ---------------------------------------------------------------------------
// Hypergraph and key/mediator conversion

struct Hypergraph {
  std::set<CategoryId> vertices;
  std::vector<std::vector<CategoryId>> hyperedges;  // each sorted, >= 2 distinct
  std::size_t dropped = 0;                          // outfits with < 2 categories

  std::size_t degree(CategoryId c) const {
    std::size_t d = 0;
    for (const auto& e : hyperedges) d += std::binary_search(e.begin(), e.end(), c);
    return d;
  }
};

inline Hypergraph build_hypergraph(const std::vector<Outfit>& outfits, const ItemTable& items) {
  Hypergraph h;
  for (const Outfit& o : outfits) {
    auto cats = outfit_categories(o, items);
    if (cats.size() < 2) {
      ++h.dropped;
      continue;
    }
    h.vertices.insert(cats.begin(), cats.end());
    h.hyperedges.push_back(std::move(cats));
  }
  return h;
}

// Chooses the two key nodes of a hyperedge (given sorted and distinct).
using KeySelector = std::function<std::array<CategoryId, 2>(std::span<const CategoryId>)>;

inline std::array<CategoryId, 2> smallest_id_keys(std::span<const CategoryId> vertices) {
  return {vertices[0], vertices[1]};
}

// Alternative rule: the two vertices with the highest hypergraph degree,
// ties broken by smaller id.
inline KeySelector most_frequent_keys(const Hypergraph& h) {
  std::map<CategoryId, std::size_t> degree;
  for (const auto& e : h.hyperedges)
    for (CategoryId c : e) ++degree[c];
  return [degree = std::move(degree)](std::span<const CategoryId> vertices) {
    std::vector<CategoryId> v(vertices.begin(), vertices.end());
    auto deg = [&](CategoryId c) {
      auto it = degree.find(c);
      return it == degree.end() ? std::size_t{0} : it->second;
    };
    std::stable_sort(v.begin(), v.end(),
                     [&](CategoryId a, CategoryId b) { return deg(a) > deg(b); });
    return std::array<CategoryId, 2>{std::min(v[0], v[1]), std::max(v[0], v[1])};
  };
}

struct HyperedgeConversion {
  std::array<CategoryId, 2> keys{};
  std::vector<CategoryId> mediators;
  std::vector<CategoryPair> edges;  // key1-key2, then each mediator to both keys
};

inline HyperedgeConversion convert_hyperedge(std::span<const CategoryId> hyperedge,
                                             const KeySelector& select_keys = smallest_id_keys) {
  std::vector<CategoryId> v(hyperedge.begin(), hyperedge.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (v.size() < 2)
    throw StructuralError("hyperedge needs at least 2 distinct vertices, got " +
                          std::to_string(v.size()));

  HyperedgeConversion out;
  out.keys = select_keys(v);
  if (out.keys[0] == out.keys[1]) throw StructuralError("key selector returned one vertex twice");
  out.edges.push_back(ordered_pair(out.keys[0], out.keys[1]));
  for (CategoryId c : v) {
    if (c == out.keys[0] || c == out.keys[1]) continue;
    out.mediators.push_back(c);
    out.edges.push_back(ordered_pair(c, out.keys[0]));
    out.edges.push_back(ordered_pair(c, out.keys[1]));
  }
  return out;
}

struct ConvertedGraph {
  std::vector<HyperedgeConversion> conversions;
  std::map<CategoryPair, std::size_t> edge_multiplicity;

  std::size_t pre_merge_edge_count() const {
    std::size_t n = 0;
    for (const auto& c : conversions) n += c.edges.size();
    return n;
  }
};

inline ConvertedGraph convert_hypergraph(const Hypergraph& h,
                                         const KeySelector& select_keys = smallest_id_keys) {
  ConvertedGraph g;
  for (const auto& e : h.hyperedges) {
    auto conv = convert_hyperedge(e, select_keys);
    for (const auto& edge : conv.edges) ++g.edge_multiplicity[edge];
    g.conversions.push_back(std::move(conv));
  }
  return g;
}

// HGNN structure: the outfit's own hyperedge, converted to key/mediator edges.
inline OutfitStructure hyperedge_structure(const Outfit& outfit, const ItemTable& items,
                                           const KeySelector& select_keys = smallest_id_keys) {
  OutfitStructure s = detail::group_by_category(outfit, items);
  if (s.nodes.size() < 2)
    throw ModelError("outfit '" + outfit.set_id +
                     "' spans fewer than 2 categories; its hyperedge is degenerate");
  std::vector<CategoryId> cats;
  for (const auto& n : s.nodes) cats.push_back(n.category);
  detail::connect(s, convert_hyperedge(cats, select_keys).edges);
  return s;
}

// One line per hyperedge: space-separated sorted categories.
inline std::string format_hypergraph(const Hypergraph& h) {
  std::string out;
  for (const auto& e : h.hyperedges) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(e[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace compat
