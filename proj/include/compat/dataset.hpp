#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "compat/error.hpp"
#include "compat/random.hpp"

namespace compat {

using CategoryId = std::int64_t;

struct Item {
  std::string item_id;  // "<set_id>_<index>"
  std::int64_t index = 0;
  CategoryId category_id = 0;
  std::string name;
  std::optional<double> price;
  std::optional<std::int64_t> likes;
  std::string image_ref;

  bool operator==(const Item&) const = default;
};

// Ordered list of item ids; scored as a set.
struct Outfit {
  std::string set_id;
  std::vector<std::string> items;

  bool operator==(const Outfit&) const = default;
};

inline std::string make_item_id(std::string_view set_id, std::int64_t index) {
  std::string id(set_id);
  id += '_';
  id += std::to_string(index);
  return id;
}

// Item lookup keyed by item_id; preserves insertion order.
class ItemTable {
 public:
  void add(Item item) {
    auto [it, inserted] = index_.emplace(item.item_id, items_.size());
    if (!inserted)
      throw StructuralError("duplicate item_id '" + item.item_id + "'");
    items_.push_back(std::move(item));
  }

  const Item* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const Item& at(std::string_view id) const {
    if (const Item* item = find(id)) return *item;
    throw LookupError("unknown item id '" + std::string(id) + "'");
  }

  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  // Sub-table holding only the items referenced by `outfits`, in outfit order.
  ItemTable restricted_to(const std::vector<Outfit>& outfits) const {
    ItemTable out;
    for (const Outfit& o : outfits)
      for (const auto& id : o.items)
        if (!out.contains(id)) out.add(at(id));
    return out;
  }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct OutfitData {
  std::vector<Outfit> outfits;
  ItemTable items;
};

// ---------------------------------------------------------------------------
// Outfit file (Polyvore JSON layout)

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw StructuralError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::int64_t require_int(const nlohmann::json& obj, const char* key,
                                const std::string& where) {
  const auto& v = require(obj, key, where);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d) return static_cast<std::int64_t>(d);
  }
  if (v.is_string()) {
    // Some Polyvore dumps quote numeric fields.
    try {
      std::size_t used = 0;
      const std::string s = v.get<std::string>();
      const long long parsed = std::stoll(s, &used);
      if (used == s.size()) return parsed;
    } catch (const std::exception&) {
    }
  }
  throw StructuralError(where + ": field '" + key + "' is not an integer");
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  const auto& v = require(obj, key, where);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw StructuralError(where + ": field '" + key + "' is not a string");
}

}  // namespace detail

inline OutfitData parse_outfits(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed outfit file: ") + e.what(), e.byte);
  }
  if (!doc.is_array()) throw ParseError("outfit file must be a JSON array", 0);

  OutfitData data;
  std::unordered_set<std::string> seen_sets;
  for (std::size_t n = 0; n < doc.size(); ++n) {
    const auto& entry = doc[n];
    const std::string where = "outfit entry " + std::to_string(n);
    if (!entry.is_object()) throw StructuralError(where + ": not an object");

    Outfit outfit;
    outfit.set_id = detail::require_string(entry, "set_id", where);
    if (!seen_sets.insert(outfit.set_id).second)
      throw StructuralError("duplicate set_id '" + outfit.set_id + "'");

    const auto& items = detail::require(entry, "items", where);
    if (!items.is_array()) throw StructuralError(where + ": 'items' is not an array");
    for (const auto& raw : items) {
      if (!raw.is_object()) throw StructuralError(where + ": item is not an object");
      Item item;
      item.index = detail::require_int(raw, "index", where);
      item.item_id = make_item_id(outfit.set_id, item.index);
      item.category_id = detail::require_int(raw, "categoryid", where);
      if (item.category_id < 0)
        throw StructuralError(where + ": negative categoryid");
      item.name = detail::require_string(raw, "name", where);
      item.image_ref = detail::require_string(raw, "image", where);
      if (auto it = raw.find("price"); it != raw.end() && it->is_number()) {
        item.price = it->get<double>();
        if (*item.price < 0) throw StructuralError(where + ": negative price");
      }
      if (auto it = raw.find("likes"); it != raw.end() && it->is_number()) {
        item.likes = it->get<std::int64_t>();
        if (*item.likes < 0) throw StructuralError(where + ": negative likes");
      }
      outfit.items.push_back(item.item_id);
      data.items.add(std::move(item));  // throws on a repeated index
    }
    data.outfits.push_back(std::move(outfit));
  }
  return data;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline OutfitData load_outfit_file(const std::string& path) {
  return parse_outfits(read_text_file(path));
}

// Serializes outfits back to the outfit-file layout; stable key order.
inline std::string format_outfits(const std::vector<Outfit>& outfits,
                                  const ItemTable& items) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const Outfit& o : outfits) {
    nlohmann::ordered_json entry;
    entry["set_id"] = o.set_id;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& id : o.items) {
      const Item& item = items.at(id);
      nlohmann::ordered_json j;
      j["index"] = item.index;
      j["name"] = item.name;
      j["categoryid"] = item.category_id;
      if (item.price) j["price"] = *item.price;
      if (item.likes) j["likes"] = *item.likes;
      j["image"] = item.image_ref;
      arr.push_back(std::move(j));
    }
    entry["items"] = std::move(arr);
    doc.push_back(std::move(entry));
  }
  return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Filtering and splitting

struct FilteredDataset {
  std::vector<Outfit> outfits;
  std::set<CategoryId> category_set;
};

inline std::map<CategoryId, std::size_t> count_categories(
    const std::vector<Outfit>& outfits, const ItemTable& items) {
  std::map<CategoryId, std::size_t> counts;
  for (const Outfit& o : outfits)
    for (const auto& id : o.items) ++counts[items.at(id).category_id];
  return counts;
}

// Removes items of categories seen fewer than `min_category_count` times, then
// outfits left with fewer than `min_outfit_size` items. Dropping outfits can
// push another category under the threshold, so both rules are re-applied
// until nothing changes; the result is a fixpoint (and filtering idempotent).
inline FilteredDataset filter_dataset(std::vector<Outfit> outfits, const ItemTable& items,
                                      std::size_t min_category_count = 100,
                                      std::size_t min_outfit_size = 3) {
  for (;;) {
    const auto counts = count_categories(outfits, items);
    bool changed = false;
    std::vector<Outfit> kept;
    kept.reserve(outfits.size());
    for (Outfit& o : outfits) {
      const auto before = o.items.size();
      std::erase_if(o.items, [&](const std::string& id) {
        return counts.at(items.at(id).category_id) < min_category_count;
      });
      changed |= o.items.size() != before;
      if (o.items.size() >= min_outfit_size)
        kept.push_back(std::move(o));
      else
        changed = true;
    }
    outfits = std::move(kept);
    if (!changed) break;
  }
  if (outfits.empty()) throw DatasetError("empty dataset: every outfit was filtered out");

  FilteredDataset out;
  for (const auto& [cat, n] : count_categories(outfits, items)) out.category_set.insert(cat);
  out.outfits = std::move(outfits);
  return out;
}

struct DatasetSplit {
  std::vector<Outfit> train;
  std::vector<Outfit> validation;
  std::vector<Outfit> test;
  std::set<CategoryId> category_set;
};

// Seeded shuffle, then the first floor(n * train_fraction) outfits go to
// train and the rest to test. `validation_fraction` of the train part (taken
// from its tail) becomes the validation split.
inline DatasetSplit split_dataset(std::vector<Outfit> outfits, double train_fraction,
                                  std::uint64_t seed, double validation_fraction = 0.0,
                                  std::set<CategoryId> category_set = {}) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ArgumentError("train_fraction must lie in (0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ArgumentError("validation_fraction must lie in [0, 1)");

  Rng rng(derive_seed(seed, {0x5b17}));
  rng.shuffle(std::span<Outfit>(outfits));

  const auto n = outfits.size();
  const auto n_train_total =
      std::min(n, static_cast<std::size_t>(std::floor(n * train_fraction + 1e-9)));
  const auto n_val = static_cast<std::size_t>(
      std::floor(n_train_total * validation_fraction + 1e-9));
  const auto n_train = n_train_total - n_val;

  DatasetSplit split;
  split.category_set = std::move(category_set);
  auto first = std::make_move_iterator(outfits.begin());
  split.train.assign(first, first + n_train);
  split.validation.assign(first + n_train, first + n_train_total);
  split.test.assign(first + n_train_total, std::make_move_iterator(outfits.end()));
  return split;
}

// `set_id<TAB>split` lines: train, then validation, then test, each in split order.
inline std::string format_split_manifest(const DatasetSplit& split) {
  std::string out;
  auto emit = [&](const std::vector<Outfit>& part, const char* name) {
    for (const Outfit& o : part) {
      out += o.set_id;
      out += '\t';
      out += name;
      out += '\n';
    }
  };
  emit(split.train, "train");
  emit(split.validation, "validation");
  emit(split.test, "test");
  return out;
}

// Rebuilds a split from a manifest and the pool of outfits it refers to.
inline DatasetSplit apply_split_manifest(std::string_view manifest,
                                         const std::vector<Outfit>& outfits,
                                         const ItemTable& items) {
  std::unordered_map<std::string, const Outfit*> by_id;
  for (const Outfit& o : outfits) by_id.emplace(o.set_id, &o);

  DatasetSplit split;
  std::istringstream in{std::string(manifest)};
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("split manifest line " + std::to_string(line_no) + " lacks a tab",
                       line_start);
    const std::string set_id = line.substr(0, tab);
    const std::string part = line.substr(tab + 1);
    auto it = by_id.find(set_id);
    if (it == by_id.end())
      throw LookupError("split manifest names unknown set_id '" + set_id + "'");
    if (part == "train")
      split.train.push_back(*it->second);
    else if (part == "validation")
      split.validation.push_back(*it->second);
    else if (part == "test")
      split.test.push_back(*it->second);
    else
      throw ParseError("unknown split name '" + part + "'", line_start + tab + 1);
  }
  for (const auto* part : {&split.train, &split.validation, &split.test})
    for (const auto& [cat, n] : count_categories(*part, items)) split.category_set.insert(cat);
  return split;
}

// ---------------------------------------------------------------------------
// Negative sampling and FITB questions

struct CompatPair {
  Outfit positive;
  Outfit negative;
  std::size_t replaced_position = 0;
};

struct FitbQuestion {
  Outfit partial;  // the source outfit without the masked item
  std::size_t masked_position = 0;
  std::vector<std::string> choices;  // exactly 4
  std::size_t answer_index = 0;

  // The partial outfit completed with choice `k` at the masked position.
  Outfit completed(std::size_t k) const {
    Outfit o = partial;
    o.items.insert(o.items.begin() + static_cast<std::ptrdiff_t>(masked_position),
                   choices.at(k));
    return o;
  }
};

// Pool of item ids that negatives are drawn from.
using ItemPool = std::vector<std::string>;

inline ItemPool item_pool(const std::vector<Outfit>& outfits) {
  ItemPool pool;
  std::unordered_set<std::string> seen;
  for (const Outfit& o : outfits)
    for (const auto& id : o.items)
      if (seen.insert(id).second) pool.push_back(id);
  return pool;
}

namespace detail {

// Number of pool entries that are not in `excluded`; pool entries are unique.
inline std::size_t available_outside(const ItemPool& pool,
                                     const std::vector<std::string>& excluded,
                                     const std::unordered_set<std::string>& pool_set) {
  std::size_t inside = 0;
  std::unordered_set<std::string> counted;
  for (const auto& id : excluded)
    if (pool_set.contains(id) && counted.insert(id).second) ++inside;
  return pool.size() - inside;
}

inline const std::string& draw_outside(const ItemPool& pool,
                                       const std::vector<std::string>& excluded,
                                       Rng& rng) {
  for (;;) {
    const std::string& candidate = pool[rng.uniform_index(pool.size())];
    if (std::find(excluded.begin(), excluded.end(), candidate) == excluded.end())
      return candidate;
  }
}

}  // namespace detail

// Samples candidates by rejection. The pool is kept as a set too, so the
// exhaustion check costs O(outfit size) rather than O(pool size).
class NegativeSampler {
 public:
  explicit NegativeSampler(ItemPool pool) : pool_(std::move(pool)) {
    pool_set_.insert(pool_.begin(), pool_.end());
    if (pool_set_.size() != pool_.size())
      throw StructuralError("negative-sampling pool contains duplicate ids");
  }

  const ItemPool& pool() const noexcept { return pool_; }

  CompatPair negative_for(const Outfit& outfit, Rng& rng) const {
    if (outfit.items.empty()) throw SamplingError("cannot corrupt an empty outfit");
    if (detail::available_outside(pool_, outfit.items, pool_set_) == 0)
      throw SamplingError("no replacement candidates for outfit '" + outfit.set_id + "'");
    CompatPair pair;
    pair.positive = outfit;
    pair.negative = outfit;
    pair.replaced_position = rng.uniform_index(outfit.items.size());
    pair.negative.items[pair.replaced_position] = detail::draw_outside(pool_, outfit.items, rng);
    return pair;
  }

  FitbQuestion question_for(const Outfit& outfit, Rng& rng) const {
    if (outfit.items.size() < 2)
      throw SamplingError("outfit '" + outfit.set_id + "' is too small for a FITB question");
    if (detail::available_outside(pool_, outfit.items, pool_set_) < 3)
      throw SamplingError("fewer than 3 distinct negatives available for outfit '" +
                          outfit.set_id + "'");
    FitbQuestion q;
    q.masked_position = rng.uniform_index(outfit.items.size());
    const std::string answer = outfit.items[q.masked_position];
    q.partial = outfit;
    q.partial.items.erase(q.partial.items.begin() +
                          static_cast<std::ptrdiff_t>(q.masked_position));

    std::vector<std::string> excluded = outfit.items;
    std::vector<std::string> negatives;
    while (negatives.size() < 3) {
      const std::string& neg = detail::draw_outside(pool_, excluded, rng);
      negatives.push_back(neg);
      excluded.push_back(neg);
    }
    q.answer_index = rng.uniform_index(4);
    for (std::size_t k = 0, n = 0; k < 4; ++k)
      q.choices.push_back(k == q.answer_index ? answer : negatives[n++]);
    return q;
  }

 private:
  ItemPool pool_;
  std::unordered_set<std::string> pool_set_;
};

inline CompatPair sample_negative_outfit(const Outfit& outfit, const ItemPool& corpus,
                                         Rng& rng) {
  return NegativeSampler(corpus).negative_for(outfit, rng);
}

// One negative per outfit; outfit k uses its own derived stream.
inline std::vector<CompatPair> build_compat_pairs(const std::vector<Outfit>& outfits,
                                                  const ItemPool& corpus,
                                                  std::uint64_t seed) {
  NegativeSampler sampler(corpus);
  std::vector<CompatPair> pairs;
  pairs.reserve(outfits.size());
  for (std::size_t k = 0; k < outfits.size(); ++k) {
    Rng rng(derive_seed(seed, {0xc0, k}));
    pairs.push_back(sampler.negative_for(outfits[k], rng));
  }
  return pairs;
}

inline std::vector<FitbQuestion> build_fitb_questions(const std::vector<Outfit>& outfits,
                                                      const ItemPool& corpus,
                                                      std::uint64_t seed) {
  NegativeSampler sampler(corpus);
  std::vector<FitbQuestion> questions;
  questions.reserve(outfits.size());
  for (std::size_t k = 0; k < outfits.size(); ++k) {
    if (outfits[k].items.size() < 3)
      throw SamplingError("FITB source outfit '" + outfits[k].set_id +
                          "' has fewer than 3 items");
    Rng rng(derive_seed(seed, {0xf1, k}));
    questions.push_back(sampler.question_for(outfits[k], rng));
  }
  return questions;
}

// JSON persistence for evaluation units, so model comparisons share them.
inline std::string format_fitb_questions(const std::vector<FitbQuestion>& questions) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& q : questions) {
    nlohmann::ordered_json j;
    j["set_id"] = q.partial.set_id;
    j["partial"] = q.partial.items;
    j["masked_position"] = q.masked_position;
    j["choices"] = q.choices;
    j["answer_index"] = q.answer_index;
    doc.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

inline std::string format_compat_pairs(const std::vector<CompatPair>& pairs) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["set_id"] = p.positive.set_id;
    j["positive"] = p.positive.items;
    j["negative"] = p.negative.items;
    j["replaced_position"] = p.replaced_position;
    doc.push_back(std::move(j));
  }
  return doc.dump(1) + "\n";
}

}  // namespace compat
