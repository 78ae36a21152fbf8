#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compat/binary_io.hpp"
#include "compat/dataset.hpp"
#include "compat/error.hpp"

namespace compat {

// ---------------------------------------------------------------------------
// Text vocabulary

// Lowercases ASCII and splits on every non-alphanumeric byte.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Words must be unique; order is taken as given.
  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (!index_.emplace(words_[i], i).second)
        throw StructuralError("duplicate vocabulary token '" + words_[i] + "'");
  }

  const std::vector<std::string>& words() const noexcept { return words_; }
  std::size_t size() const noexcept { return words_.size(); }
  bool empty() const noexcept { return words_.empty(); }

  std::optional<std::size_t> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // One token per line.
  std::string format() const {
    std::string out;
    for (const auto& w : words_) out += w + '\n';
    return out;
  }

  static Vocabulary parse(std::string_view text) {
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      if (end > start) words.emplace_back(text.substr(start, end - start));
      start = end + 1;
    }
    return Vocabulary(std::move(words));
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens with corpus frequency >= min_frequency, ordered by descending
// frequency, ties broken lexicographically.
template <typename ItemRange>
Vocabulary build_vocabulary(const ItemRange& items, std::size_t min_frequency) {
  std::map<std::string, std::size_t> freq;
  for (const Item& item : items)
    for (auto& tok : tokenize(item.name)) ++freq[std::move(tok)];

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq)
    if (n >= min_frequency) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [tok, n] : kept) words.push_back(std::move(tok));
  return Vocabulary(std::move(words));
}

// Presence indicator per vocabulary token (0/1), not counts.
inline std::vector<double> encode_text(const Item& item, const Vocabulary& vocab) {
  std::vector<double> v(vocab.size(), 0.0);
  for (const auto& tok : tokenize(item.name))
    if (auto idx = vocab.find(tok)) v[*idx] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Embedding store

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ArgumentError("embedding dim must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  void add(std::string id, std::vector<double> vec) {
    if (vec.size() != dim_)
      throw StructuralError("vector for '" + id + "' has length " +
                            std::to_string(vec.size()) + ", store dim is " +
                            std::to_string(dim_));
    for (double x : vec)
      if (!std::isfinite(x)) throw NumericError("non-finite value in vector for '" + id + "'");
    if (!index_.emplace(id, ids_.size()).second)
      throw StructuralError("duplicate id '" + id + "' in embedding store");
    ids_.push_back(std::move(id));
    vectors_.push_back(std::move(vec));
  }

  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

  const std::vector<double>* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  std::span<const double> at(std::string_view id) const {
    if (const auto* v = find(id)) return *v;
    throw LookupError("item '" + std::string(id) + "' missing from embedding store");
  }

  const std::vector<double>& vector_at(std::size_t k) const { return vectors_.at(k); }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::string_view kStoreMagic = "EMBD";
inline constexpr std::uint16_t kStoreVersion = 1;

// magic "EMBD", u16 version, u32 dim, u64 count, then per record:
// u16 id length, id bytes, dim x f32. Little-endian throughout.
inline std::string serialize_store(const EmbeddingStore& store) {
  std::string out;
  out.append(kStoreMagic);
  bin::put<std::uint16_t>(out, kStoreVersion);
  bin::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  bin::put<std::uint64_t>(out, store.size());
  for (std::size_t k = 0; k < store.size(); ++k) {
    bin::put_string16(out, store.ids()[k]);
    for (double x : store.vector_at(k)) bin::put<float>(out, static_cast<float>(x));
  }
  return out;
}

inline EmbeddingStore deserialize_store(std::string_view data) {
  bin::Reader rd(data);
  if (rd.bytes(std::min<std::size_t>(4, data.size()), "magic") != kStoreMagic)
    throw FormatError("not an embedding store (bad magic)");
  const auto version = rd.get<std::uint16_t>("version");
  if (version != kStoreVersion)
    throw FormatError("unsupported embedding store version " + std::to_string(version));
  const auto dim = rd.get<std::uint32_t>("dim");
  const auto count = rd.get<std::uint64_t>("count");
  if (dim == 0) throw FormatError("embedding store declares dim 0");

  EmbeddingStore store(dim);
  for (std::uint64_t k = 0; k < count; ++k) {
    try {
      std::string id = rd.string16("record id");
      std::vector<double> vec(dim);
      for (auto& x : vec) x = rd.get<float>("record vector");
      store.add(std::move(id), std::move(vec));
    } catch (const Error& e) {
      throw FormatError("embedding store record " + std::to_string(k) + ": " + e.what());
    }
  }
  if (!rd.at_end())
    throw FormatError("trailing bytes after " + std::to_string(count) +
                      " records (dim mismatch?)");
  return store;
}

inline void write_store(const EmbeddingStore& store, const std::string& path) {
  write_text_file(path, serialize_store(store));
}

inline EmbeddingStore read_store(const std::string& path) {
  return deserialize_store(read_text_file(path));
}

// Text one-hot store for every item in `items`.
template <typename ItemRange>
EmbeddingStore build_text_store(const ItemRange& items, const Vocabulary& vocab) {
  if (vocab.empty()) throw ArgumentError("cannot build a text store from an empty vocabulary");
  EmbeddingStore store(vocab.size());
  for (const Item& item : items) store.add(item.item_id, encode_text(item, vocab));
  return store;
}

// ---------------------------------------------------------------------------
// Modalities

enum class Modality { visual, textual, multimodal };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::textual: return "textual";
    case Modality::multimodal: return "multimodal";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "visual") return Modality::visual;
  if (s == "textual" || s == "text") return Modality::textual;
  if (s == "multimodal") return Modality::multimodal;
  throw ArgumentError("unknown modality '" + std::string(s) + "'");
}

struct ModalityConfig {
  Modality mode = Modality::multimodal;
  double beta = 0.2;  // weight of the visual channel; multimodal only

  bool uses_visual() const noexcept { return mode != Modality::textual; }
  bool uses_text() const noexcept { return mode != Modality::visual; }
};

struct FeatureStores {
  const EmbeddingStore* visual = nullptr;
  const EmbeddingStore* text = nullptr;
};

struct ItemFeatures {
  std::span<const double> visual;
  std::span<const double> text;
};

inline ItemFeatures get_features(std::string_view item_id, const ModalityConfig& mode,
                                 const FeatureStores& stores) {
  auto fetch = [&](const EmbeddingStore* store, const char* name) {
    if (store == nullptr)
      throw LookupError(std::string("no ") + name + " store loaded (needed for item '" +
                        std::string(item_id) + "')");
    const auto* v = store->find(item_id);
    if (v == nullptr)
      throw LookupError("item '" + std::string(item_id) + "' missing from " + name +
                        " store");
    return std::span<const double>(*v);
  };
  ItemFeatures f;
  if (mode.uses_visual()) f.visual = fetch(stores.visual, "visual");
  if (mode.uses_text()) f.text = fetch(stores.text, "textual");
  return f;
}

}  // namespace compat
