#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "compat/compat.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("compat_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// Outfit k is "s<k>" and holds one item per entry of cats[k].
inline compat::OutfitData outfits_from_categories(
    const std::vector<std::vector<compat::CategoryId>>& cats) {
  compat::OutfitData data;
  for (std::size_t k = 0; k < cats.size(); ++k) {
    compat::Outfit o;
    o.set_id = "s" + std::to_string(k);
    for (std::size_t j = 0; j < cats[k].size(); ++j) {
      compat::Item item;
      item.index = static_cast<std::int64_t>(j + 1);
      item.item_id = compat::make_item_id(o.set_id, item.index);
      item.category_id = cats[k][j];
      item.name = "item " + std::to_string(cats[k][j]);
      o.items.push_back(item.item_id);
      data.items.add(std::move(item));
    }
    data.outfits.push_back(std::move(o));
  }
  return data;
}

inline std::vector<std::vector<compat::CategoryId>> random_category_lists(
    std::mt19937_64& gen, std::size_t n, std::size_t n_categories, std::size_t min_size,
    std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size(min_size, max_size);
  std::uniform_int_distribution<compat::CategoryId> cat(0,
                                                        static_cast<compat::CategoryId>(n_categories) - 1);
  std::vector<std::vector<compat::CategoryId>> out(n);
  for (auto& o : out) {
    const std::size_t k = size(gen);
    for (std::size_t j = 0; j < k; ++j) o.push_back(cat(gen));
  }
  return out;
}

// A small planted dataset with text store and co-occurrence graph, enough to
// build and run both models.
struct Fixture {
  compat::SyntheticDataset ds;
  compat::Vocabulary vocab;
  compat::EmbeddingStore text;
  compat::CategoryGraph graph;

  explicit Fixture(std::uint64_t seed = 3, std::size_t n_outfits = 60,
                   std::size_t n_categories = 6, std::size_t dim = 5) {
    compat::SyntheticConfig sc;
    sc.n_outfits = n_outfits;
    sc.n_categories = n_categories;
    sc.items_per_category = 4;
    sc.planted_groups = 2;
    sc.feature_dim = dim;
    sc.min_outfit_size = 3;
    sc.max_outfit_size = std::min<std::size_t>(5, n_categories);
    sc.seed = seed;
    ds = compat::generate_synthetic(sc);
    vocab = compat::build_vocabulary(ds.data.items, 1);
    text = compat::build_text_store(ds.data.items, vocab);
    graph = compat::build_cooccurrence_graph(ds.data.outfits, ds.data.items);
  }

  compat::ScoringContext context() const { return {&ds.data.items, {&ds.visual, &text}, &graph}; }

  std::vector<compat::CategoryId> categories() const {
    std::vector<compat::CategoryId> out;
    for (const auto& item : ds.data.items) out.push_back(item.category_id);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  compat::ModelConfig model_config(compat::ModelKind kind, compat::Modality mode,
                                   double beta = 0.2) const {
    compat::ModelConfig mc;
    mc.kind = kind;
    mc.modality = {mode, beta};
    mc.hidden = 6;
    mc.steps = 2;
    mc.categories = categories();
    mc.visual_dim = ds.visual.dim();
    mc.text_dim = text.dim();
    return mc;
  }

  double score(const compat::CompatModel& m, const compat::Outfit& o) const {
    return m.score(m.make_input(o, ds.data.items, {&ds.visual, &text}, &graph));
  }
};

}  // namespace testing_support
