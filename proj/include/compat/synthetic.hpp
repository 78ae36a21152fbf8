#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/features.hpp"
#include "compat/random.hpp"

namespace compat {

// Planted-structure generator. Every product belongs to one latent group;
// a clean outfit draws all of its items from a single group, so group
// agreement is exactly what makes an outfit compatible. Visual vectors are a
// group centroid plus noise and names carry a group token, so both
// modalities see the signal.
struct SyntheticConfig {
  std::size_t n_outfits = 1600;
  std::size_t n_categories = 24;
  std::size_t items_per_category = 12;
  std::size_t planted_groups = 6;
  double noise = 0.0;  // probability an item is taken from another group
  std::uint64_t seed = 1;
  std::size_t feature_dim = 16;
  double signal_scale = 1.0;   // stddev of centroid coordinates
  double feature_noise = 0.5;  // stddev around the group centroid
  std::size_t min_outfit_size = 3;
  std::size_t max_outfit_size = 8;
  std::size_t style_words = 3;     // group words in each product name
  std::size_t style_lexicon = 6;   // distinct words per group
};

struct SyntheticDataset {
  OutfitData data;
  EmbeddingStore visual;
  std::unordered_map<std::string, std::size_t> item_group;
  std::vector<std::size_t> outfit_group;
};

inline constexpr CategoryId kSyntheticCategoryBase = 1000;

inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.planted_groups < 2) throw ArgumentError("planted_groups must be >= 2");
  if (cfg.n_categories < 4) throw ArgumentError("n_categories must be >= 4");
  if (cfg.n_outfits == 0) throw ArgumentError("n_outfits must be positive");
  if (cfg.items_per_category < cfg.planted_groups)
    throw ArgumentError("items_per_category must be >= planted_groups so every "
                        "category holds every group");
  if (!(cfg.noise >= 0.0 && cfg.noise <= 1.0)) throw ArgumentError("noise must lie in [0, 1]");
  if (cfg.feature_dim == 0) throw ArgumentError("feature_dim must be positive");
  if (cfg.style_words > cfg.style_lexicon)
    throw ArgumentError("style_words must not exceed style_lexicon");
  if (cfg.min_outfit_size < 1 || cfg.min_outfit_size > cfg.max_outfit_size ||
      cfg.min_outfit_size > cfg.n_categories)
    throw ArgumentError("infeasible outfit size range");

  Rng rng(derive_seed(cfg.seed, {0x5e7}));
  const std::size_t G = cfg.planted_groups;
  const std::size_t D = cfg.feature_dim;

  std::vector<std::vector<double>> centroid(G, std::vector<double>(D));
  for (auto& c : centroid)
    for (auto& x : c) x = cfg.signal_scale * rng.normal();

  struct Product {
    CategoryId category;
    std::size_t group;
    std::vector<double> feature;
    std::string name;
  };
  // products[c][j]; product j of each category has group j % G.
  std::vector<std::vector<Product>> products(cfg.n_categories);
  constexpr std::size_t kFillerWords = 24;
  for (std::size_t c = 0; c < cfg.n_categories; ++c) {
    for (std::size_t j = 0; j < cfg.items_per_category; ++j) {
      Product p;
      p.category = kSyntheticCategoryBase + static_cast<CategoryId>(c);
      p.group = j % G;
      p.feature.resize(D);
      for (std::size_t k = 0; k < D; ++k)
        p.feature[k] = centroid[p.group][k] + cfg.feature_noise * rng.normal();
      // e.g. "style3b style3e cat7 word12": group words, category, filler
      std::vector<std::size_t> lexicon(cfg.style_lexicon);
      std::iota(lexicon.begin(), lexicon.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(lexicon));
      for (std::size_t w = 0; w < cfg.style_words; ++w)
        p.name += "style" + std::to_string(p.group) + static_cast<char>('a' + lexicon[w] % 26) +
                  (lexicon[w] >= 26 ? std::to_string(lexicon[w] / 26) : "") + " ";
      p.name += "cat" + std::to_string(c) + " word" +
                std::to_string(rng.uniform_index(kFillerWords));
      products[c].push_back(std::move(p));
    }
  }

  SyntheticDataset out;
  out.visual = EmbeddingStore(D);
  std::vector<std::size_t> category_order(cfg.n_categories);
  const std::size_t max_size = std::min(cfg.max_outfit_size, cfg.n_categories);

  for (std::size_t n = 0; n < cfg.n_outfits; ++n) {
    const std::size_t group = rng.uniform_index(G);
    const std::size_t size =
        cfg.min_outfit_size + rng.uniform_index(max_size - cfg.min_outfit_size + 1);
    std::iota(category_order.begin(), category_order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(category_order));

    Outfit outfit;
    outfit.set_id = std::to_string(100000 + n);
    for (std::size_t slot = 0; slot < size; ++slot) {
      const std::size_t c = category_order[slot];
      std::size_t g = group;
      if (rng.bernoulli(cfg.noise)) g = (group + 1 + rng.uniform_index(G - 1)) % G;
      // Products with group g in category c sit at indices g, g+G, g+2G, ...
      const std::size_t per_group = (cfg.items_per_category - g + G - 1) / G;
      const Product& p = products[c][g + G * rng.uniform_index(per_group)];

      Item item;
      item.index = static_cast<std::int64_t>(slot + 1);
      item.item_id = make_item_id(outfit.set_id, item.index);
      item.category_id = p.category;
      item.name = p.name;
      item.price = static_cast<double>(10 + rng.uniform_index(190));
      item.likes = static_cast<std::int64_t>(rng.uniform_index(500));
      item.image_ref = "synthetic://" + std::to_string(p.category) + "/" + std::to_string(g);

      out.item_group.emplace(item.item_id, p.group);
      out.visual.add(item.item_id, p.feature);
      outfit.items.push_back(item.item_id);
      out.data.items.add(std::move(item));
    }
    out.outfit_group.push_back(group);
    out.data.outfits.push_back(std::move(outfit));
  }
  return out;
}

// Bayes scorer from the latent labels: the share of items that belong to
// the outfit's majority group.
inline double group_majority_score(const Outfit& outfit,
                                   const std::unordered_map<std::string, std::size_t>& groups) {
  std::unordered_map<std::size_t, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& id : outfit.items) best = std::max(best, ++counts[groups.at(id)]);
  return outfit.items.empty() ? 0.0 : static_cast<double>(best) / outfit.items.size();
}

inline std::string format_group_labels(const SyntheticDataset& ds) {
  std::string out;
  for (const Item& item : ds.data.items)
    out += item.item_id + '\t' + std::to_string(ds.item_group.at(item.item_id)) + '\n';
  return out;
}

}  // namespace compat
