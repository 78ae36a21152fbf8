#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/parallel.hpp"
#include "compat/random.hpp"

namespace compat {

using OutfitScorer = std::function<double(const Outfit&)>;

// Mann-Whitney statistic: P(pos > neg) + 0.5 P(pos == neg), from average
// ranks. Computed in doubled integer units, so it is exact.
inline double auc(std::vector<double> pos, std::vector<double> neg) {
  if (pos.empty() || neg.empty()) throw ArgumentError("auc needs non-empty score lists");
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  for (const auto& e : all)
    if (std::isnan(e.score)) throw ArgumentError("auc received a NaN score");
  std::sort(all.begin(), all.end(),
            [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // Sum over positives of 2 * (1-based average rank).
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const auto twice_avg = static_cast<std::int64_t>(i + 1 + j);  // (i+1) + j = first + last
    for (std::size_t k = i; k < j; ++k)
      if (all[k].positive) twice_rank_sum += twice_avg;
    i = j;
  }
  const auto n1 = static_cast<std::int64_t>(pos.size());
  const auto n0 = static_cast<std::int64_t>(neg.size());
  const std::int64_t twice_u = twice_rank_sum - n1 * (n1 + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n1 * n0);
}

// Scores every question's 4 completions and picks the argmax (lowest index
// on ties).
inline double fitb_accuracy(const OutfitScorer& scorer, const std::vector<FitbQuestion>& questions,
                            std::size_t threads = 1) {
  if (questions.empty()) throw ArgumentError("no FITB questions to evaluate");
  std::vector<char> correct(questions.size(), 0);
  parallel_for(questions.size(), threads, [&](std::size_t q) {
    const auto& question = questions[q];
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t k = 0; k < question.choices.size(); ++k) {
      double s;
      try {
        s = scorer(question.completed(k));
      } catch (const Error&) {
        rethrow_with_context("FITB question " + std::to_string(q) + " (set " +
                             question.partial.set_id + "): ");
      }
      if (k == 0 || s > best_score) {
        best = k;
        best_score = s;
      }
    }
    correct[q] = best == question.answer_index;
  });
  std::size_t hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(questions.size());
}

struct PairScores {
  std::vector<double> positive;
  std::vector<double> negative;
};

inline PairScores score_pairs(const OutfitScorer& scorer, const std::vector<CompatPair>& pairs,
                              std::size_t threads = 1) {
  PairScores s;
  s.positive.resize(pairs.size());
  s.negative.resize(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    s.positive[k] = scorer(pairs[k].positive);
    s.negative[k] = scorer(pairs[k].negative);
  });
  return s;
}

inline double compat_auc(const OutfitScorer& scorer, const std::vector<CompatPair>& pairs,
                         std::size_t threads = 1) {
  auto s = score_pairs(scorer, pairs, threads);
  return auc(std::move(s.positive), std::move(s.negative));
}

// Uniform score in [0, 1) that is a pure function of (seed, item multiset):
// deterministic under any evaluation order or thread count.
inline OutfitScorer random_scorer(std::uint64_t seed) {
  return [seed](const Outfit& outfit) {
    std::vector<std::string> ids = outfit.items;
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = mix64(seed);
    for (const auto& id : ids) {
      for (unsigned char c : id) h = mix64(h ^ c);
      h = mix64(h ^ 0xff);
    }
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  };
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string model_id;
  std::string modality;
  std::size_t n_fitb_questions = 0;
  std::optional<double> fitb_accuracy;  // absent when the task was not run
  std::size_t n_compat_pairs = 0;
  std::optional<double> auc;
  std::uint64_t seed = 0;
  std::string timestamp;  // ISO-8601 UTC

  bool operator==(const EvalReport&) const = default;
};

inline std::string format_report(const EvalReport& r) {
  for (const auto& v : {r.fitb_accuracy, r.auc})
    if (v && !(*v >= 0.0 && *v <= 1.0)) throw ArgumentError("report metric outside [0, 1]");
  nlohmann::ordered_json j;
  j["model_id"] = r.model_id;
  j["modality"] = r.modality;
  j["n_fitb_questions"] = r.n_fitb_questions;
  j["fitb_accuracy"] = r.fitb_accuracy ? nlohmann::ordered_json(*r.fitb_accuracy) : nullptr;
  j["n_compat_pairs"] = r.n_compat_pairs;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nullptr;
  j["seed"] = r.seed;
  j["timestamp"] = r.timestamp;
  return j.dump(2) + "\n";
}

inline EvalReport parse_report(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed report: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw SchemaError("report must be a JSON object");
  for (const char* key : {"model_id", "modality", "n_fitb_questions", "fitb_accuracy",
                          "n_compat_pairs", "auc", "seed", "timestamp"})
    if (!j.contains(key)) throw SchemaError(std::string("report lacks field '") + key + "'");
  auto metric = [&](const char* key) -> std::optional<double> {
    const auto& v = j[key];
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw SchemaError(std::string("field '") + key + "' is not a number");
    return v.get<double>();
  };
  try {
    EvalReport r;
    r.model_id = j["model_id"].get<std::string>();
    r.modality = j["modality"].get<std::string>();
    r.n_fitb_questions = j["n_fitb_questions"].get<std::size_t>();
    r.fitb_accuracy = metric("fitb_accuracy");
    r.n_compat_pairs = j["n_compat_pairs"].get<std::size_t>();
    r.auc = metric("auc");
    r.seed = j["seed"].get<std::uint64_t>();
    r.timestamp = j["timestamp"].get<std::string>();
    return r;
  } catch (const nlohmann::json::type_error& e) {
    throw SchemaError(std::string("report field has the wrong type: ") + e.what());
  }
}

inline void emit_report(const EvalReport& report, const std::string& path) {
  write_text_file(path, format_report(report));
}

inline EvalReport read_report(const std::string& path) {
  return parse_report(read_text_file(path));
}

// Plain-text table in the "Method / Accuracy (FITB) / AUC (Compatibility)" layout.
inline std::string format_report_table(const std::vector<EvalReport>& reports) {
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", *v * 100.0);
    return std::string(buf);
  };
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %16s %20s\n", "Method", "Accuracy (FITB)",
                "AUC (Compatibility)");
  out += line;
  for (const auto& r : reports) {
    const std::string method = r.model_id + " (" + r.modality + ")";
    std::snprintf(line, sizeof line, "%-28s %16s %20s\n", method.c_str(),
                  pct(r.fitb_accuracy).c_str(), num(r.auc).c_str());
    out += line;
  }
  return out;
}

}  // namespace compat
