#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "compat/compat.hpp"
#include "compat/config.hpp"

namespace compat::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kNumeric = 3,
  kLookup = 4,
  kVerification = 5,
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ArgumentError*>(&e)) return kUsage;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const LookupError*>(&e)) return kLookup;
  if (dynamic_cast<const VerificationError*>(&e)) return kVerification;
  return kFailure;
}

namespace fs = std::filesystem;

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

inline std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// Shortest text that parses back to the same double.
inline std::string exact_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ISO-8601 UTC. SOURCE_DATE_EPOCH pins the clock for reproducible reports.
inline std::string report_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
    char* end = nullptr;
    const long long v = std::strtoll(env, &end, 10);
    if (*end != '\0' || v < 0) throw ArgumentError("SOURCE_DATE_EPOCH is not a valid epoch");
    t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_resolved(const Settings& s, const std::string& dir) {
  ensure_dir(dir);
  write_text_file(join_path(dir, "config.resolved"), s.format());
}

// ---------------------------------------------------------------------------
// Setting tables. Every key here is also a `--key-with-dashes` flag.

inline Settings synth_settings() {
  Settings s;
  const SyntheticConfig d;
  s.declare("out_dir", "synthetic");
  s.declare("n_outfits", std::to_string(d.n_outfits));
  s.declare("n_categories", std::to_string(d.n_categories));
  s.declare("items_per_category", std::to_string(d.items_per_category));
  s.declare("planted_groups", std::to_string(d.planted_groups));
  s.declare("noise", exact_double(d.noise));
  s.declare("seed", default_seed());
  s.declare("feature_dim", std::to_string(d.feature_dim));
  s.declare("signal_scale", exact_double(d.signal_scale));
  s.declare("feature_noise", exact_double(d.feature_noise));
  s.declare("min_outfit_size", std::to_string(d.min_outfit_size));
  s.declare("max_outfit_size", std::to_string(d.max_outfit_size));
  s.declare("style_words", std::to_string(d.style_words));
  s.declare("style_lexicon", std::to_string(d.style_lexicon));
  return s;
}

inline Settings prepare_settings() {
  Settings s;
  s.declare("data_dir", "data");
  s.declare("out_dir", "prepared");
  s.declare("min_category_count", "100");
  s.declare("min_outfit_size", "3");
  s.declare("subset", "0");
  s.declare("train_fraction", "0.7");
  s.declare("val_fraction", "0.1");
  s.declare("vocab_min_frequency", "3");
  s.declare("seed", default_seed());
  return s;
}

inline Settings embed_text_settings() {
  Settings s;
  s.declare("prepared_dir", "prepared");
  s.declare("out", "");
  return s;
}

inline void declare_store_paths(Settings& s) {
  s.declare("visual_store", "");
  s.declare("text_store", "");
}

inline Settings train_settings() {
  Settings s;
  const TrainConfig d;
  s.declare("prepared_dir", "prepared");
  s.declare("run_dir", "run");
  declare_store_paths(s);
  s.declare("learning_rate", exact_double(d.learning_rate));
  s.declare("batch_size", std::to_string(d.batch_size));
  s.declare("beta", exact_double(d.beta));
  s.declare("lambda_l2", exact_double(d.lambda_l2));
  s.declare("hidden_d", std::to_string(d.hidden_d));
  s.declare("steps_T", std::to_string(d.steps_T));
  s.declare("optimizer", std::string(to_string(d.optimizer)));
  s.declare("max_epochs", std::to_string(d.max_epochs));
  s.declare("patience", std::to_string(d.patience));
  s.declare("validation_negatives", std::to_string(d.validation_negatives));
  s.declare("min_delta", exact_double(d.min_delta));
  s.declare("seed", default_seed());
  s.declare("model", std::string(to_string(d.model)));
  s.declare("modality", std::string(to_string(d.modality)));
  s.declare("threads", std::to_string(d.threads));
  s.declare("clip_norm", exact_double(d.clip_norm));
  return s;
}

inline Settings eval_settings() {
  Settings s;
  s.declare("prepared_dir", "prepared");
  s.declare("checkpoint", "");
  s.declare("random_baseline", "false");
  s.declare("task", "both");
  s.declare("split", "test");
  s.declare("seed", default_seed());
  s.declare("out_dir", "");
  s.declare("threads", "1");
  declare_store_paths(s);
  return s;
}

inline Settings score_settings() {
  Settings s;
  s.declare("prepared_dir", "prepared");
  s.declare("checkpoint", "");
  s.declare("items", "");
  s.declare("out_dir", "");
  declare_store_paths(s);
  return s;
}

inline Settings gradcheck_settings() {
  Settings s;
  s.declare("seed", default_seed());
  s.declare("threshold", "1e-06");
  s.declare("inject_bug", "false");
  s.declare("out_dir", "");
  return s;
}

// Empty store paths default to files inside the prepared directory.
inline void resolve_store_paths(Settings& s) {
  if (s.str("visual_store").empty())
    s.set("visual_store", join_path(s.str("prepared_dir"), "visual.embd"));
  if (s.str("text_store").empty())
    s.set("text_store", join_path(s.str("prepared_dir"), "text.embd"));
}

// ---------------------------------------------------------------------------
// Prepared-directory access

struct Prepared {
  OutfitData data;
  DatasetSplit split;
  std::vector<CategoryId> categories;  // ascending
  CategoryGraph graph;                 // co-occurrence over the train split
};

inline Prepared load_prepared(const std::string& dir) {
  Prepared p;
  p.data = load_outfit_file(join_path(dir, "outfits.json"));
  p.split = apply_split_manifest(read_text_file(join_path(dir, "splits.tsv")), p.data.outfits,
                                 p.data.items);
  for (const auto& [cat, n] : count_categories(p.data.outfits, p.data.items))
    p.categories.push_back(cat);
  p.graph = parse_edge_list(read_text_file(join_path(dir, "cooccurrence.tsv")));
  return p;
}

struct LoadedStores {
  std::optional<EmbeddingStore> visual;
  std::optional<EmbeddingStore> text;
  FeatureStores view() const {
    return {visual ? &*visual : nullptr, text ? &*text : nullptr};
  }
};

inline LoadedStores load_stores(const Settings& s, const ModalityConfig& mode) {
  LoadedStores out;
  if (mode.uses_visual()) out.visual = read_store(s.str("visual_store"));
  if (mode.uses_text()) out.text = read_store(s.str("text_store"));
  return out;
}

inline void check_store_dims(const ModelConfig& cfg, const LoadedStores& stores) {
  if (stores.visual && stores.visual->dim() != cfg.visual_dim)
    throw FormatError("visual store has dim " + std::to_string(stores.visual->dim()) +
                      " but the checkpoint expects " + std::to_string(cfg.visual_dim));
  if (stores.text && stores.text->dim() != cfg.text_dim)
    throw FormatError("text store has dim " + std::to_string(stores.text->dim()) +
                      " but the checkpoint expects " + std::to_string(cfg.text_dim));
}

inline CompatModel load_model(const std::string& path, const std::vector<CategoryId>& categories) {
  CompatModel model = CompatModel::from_checkpoint(read_checkpoint(path));
  for (CategoryId c : categories)
    if (!model.category_position(c))
      throw FormatError("checkpoint has no parameters for category " + std::to_string(c) +
                        " of the prepared data");
  return model;
}

// ---------------------------------------------------------------------------
// synth

inline void run_synth(const Settings& s, std::ostream& out) {
  SyntheticConfig cfg;
  cfg.n_outfits = s.count("n_outfits");
  cfg.n_categories = s.count("n_categories");
  cfg.items_per_category = s.count("items_per_category");
  cfg.planted_groups = s.count("planted_groups");
  cfg.noise = s.real("noise");
  cfg.seed = s.u64("seed");
  cfg.feature_dim = s.count("feature_dim");
  cfg.signal_scale = s.real("signal_scale");
  cfg.feature_noise = s.real("feature_noise");
  cfg.min_outfit_size = s.count("min_outfit_size");
  cfg.max_outfit_size = s.count("max_outfit_size");
  cfg.style_words = s.count("style_words");
  cfg.style_lexicon = s.count("style_lexicon");
  const SyntheticDataset ds = generate_synthetic(cfg);

  const std::string dir = s.str("out_dir");
  write_resolved(s, dir);
  write_text_file(join_path(dir, "outfits.json"), format_outfits(ds.data.outfits, ds.data.items));
  write_store(ds.visual, join_path(dir, "visual.embd"));
  write_text_file(join_path(dir, "groups.tsv"), format_group_labels(ds));
  out << "wrote " << ds.data.outfits.size() << " outfits (" << ds.data.items.size()
      << " items) to " << dir << "\n";
}

// ---------------------------------------------------------------------------
// prepare

inline constexpr const char* kPolyvoreFiles[] = {"train_no_dup.json", "valid_no_dup.json",
                                                 "test_no_dup.json"};

// Either `outfits.json` or the three Polyvore split files, merged.
inline OutfitData load_raw_outfits(const std::string& dir) {
  const std::string single = join_path(dir, "outfits.json");
  if (fs::exists(single)) return load_outfit_file(single);

  bool all = true;
  for (const char* name : kPolyvoreFiles) all = all && fs::exists(join_path(dir, name));
  if (!all)
    throw IoError("no outfit files in '" + dir +
                  "': expected outfits.json or train_no_dup.json, valid_no_dup.json and "
                  "test_no_dup.json");
  OutfitData merged;
  std::set<std::string> seen;
  for (const char* name : kPolyvoreFiles) {
    OutfitData part;
    try {
      part = load_outfit_file(join_path(dir, name));
    } catch (const Error&) {
      rethrow_with_context(std::string(name) + ": ");
    }
    for (auto& o : part.outfits) {
      if (!seen.insert(o.set_id).second)
        throw StructuralError("set_id '" + o.set_id + "' appears in more than one file");
      merged.outfits.push_back(std::move(o));
    }
    for (const Item& item : part.items) merged.items.add(item);
  }
  return merged;
}

struct CorpusStats {
  std::size_t outfits = 0;
  std::size_t items = 0;
  std::size_t categories = 0;
  double mean_size = 0.0;
  std::size_t max_size = 0;
  std::size_t min_size = 0;
};

inline CorpusStats corpus_stats(const std::vector<Outfit>& outfits, const ItemTable& items) {
  CorpusStats st;
  st.outfits = outfits.size();
  st.categories = count_categories(outfits, items).size();
  std::size_t total = 0;
  st.min_size = outfits.empty() ? 0 : outfits.front().items.size();
  for (const auto& o : outfits) {
    total += o.items.size();
    st.max_size = std::max(st.max_size, o.items.size());
    st.min_size = std::min(st.min_size, o.items.size());
  }
  st.items = total;
  st.mean_size = outfits.empty() ? 0.0 : static_cast<double>(total) / outfits.size();
  return st;
}

inline void run_prepare(const Settings& s, std::ostream& out) {
  const std::string data_dir = s.str("data_dir");
  const std::string dir = s.str("out_dir");
  const std::uint64_t seed = s.u64("seed");

  OutfitData raw = load_raw_outfits(data_dir);
  FilteredDataset filtered =
      filter_dataset(raw.outfits, raw.items, s.count("min_category_count"),
                     s.count("min_outfit_size"));
  const CorpusStats full = corpus_stats(filtered.outfits, raw.items);

  // Seeded subset, kept in file order.
  std::vector<Outfit> chosen = filtered.outfits;
  const std::size_t subset = s.count("subset");
  if (subset > 0 && subset < chosen.size()) {
    std::vector<std::size_t> idx(chosen.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x5b5e7}));
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(subset);
    std::sort(idx.begin(), idx.end());
    std::vector<Outfit> picked;
    picked.reserve(subset);
    for (std::size_t i : idx) picked.push_back(chosen[i]);
    chosen = std::move(picked);
  }
  const ItemTable items = raw.items.restricted_to(chosen);
  const DatasetSplit split = split_dataset(chosen, s.real("train_fraction"), seed,
                                           s.real("val_fraction"), filtered.category_set);
  if (split.train.empty()) throw DatasetError("the train split is empty");

  const ItemTable train_items = items.restricted_to(split.train);
  const Vocabulary vocab = build_vocabulary(train_items, s.count("vocab_min_frequency"));
  const CategoryGraph graph = build_cooccurrence_graph(split.train, items);
  const Hypergraph hyper = build_hypergraph(split.train, items);

  write_resolved(s, dir);
  write_text_file(join_path(dir, "outfits.json"), format_outfits(chosen, items));
  write_text_file(join_path(dir, "splits.tsv"), format_split_manifest(split));
  write_text_file(join_path(dir, "vocab.txt"), vocab.format());
  write_text_file(join_path(dir, "cooccurrence.tsv"), format_edge_list(graph.edges()));
  write_text_file(join_path(dir, "hypergraph.tsv"), format_hypergraph(hyper));

  const std::string visual = join_path(data_dir, "visual.embd");
  if (fs::exists(visual) && fs::absolute(visual) != fs::absolute(join_path(dir, "visual.embd")))
    write_store(read_store(visual), join_path(dir, "visual.embd"));

  const CorpusStats prepared = corpus_stats(chosen, items);
  nlohmann::ordered_json st;
  st["n_outfits"] = full.outfits;
  st["n_items"] = full.items;
  st["n_categories"] = full.categories;
  st["mean_outfit_size"] = full.mean_size;
  st["max_outfit_size"] = full.max_size;
  st["min_outfit_size"] = full.min_size;
  st["n_prepared_outfits"] = prepared.outfits;
  st["n_prepared_categories"] = prepared.categories;
  st["n_train"] = split.train.size();
  st["n_validation"] = split.validation.size();
  st["n_test"] = split.test.size();
  st["vocab_size"] = vocab.size();
  st["n_cooccurrence_edges"] = graph.edges().size();
  write_text_file(join_path(dir, "stats.json"), st.dump(2) + "\n");

  out << "filtered " << raw.outfits.size() << " -> " << full.outfits << " outfits, "
      << full.categories << " categories, mean size " << format_double(full.mean_size, "%.2f")
      << ", max " << full.max_size << "\n";
  out << "split " << split.train.size() << " train / " << split.validation.size()
      << " validation / " << split.test.size() << " test; vocabulary " << vocab.size()
      << " words\n";
}

// ---------------------------------------------------------------------------
// embed-text

inline void run_embed_text(Settings& s, std::ostream& out) {
  const std::string dir = s.str("prepared_dir");
  if (s.str("out").empty()) s.set("out", join_path(dir, "text.embd"));
  const OutfitData data = load_outfit_file(join_path(dir, "outfits.json"));
  const Vocabulary vocab = Vocabulary::parse(read_text_file(join_path(dir, "vocab.txt")));
  const EmbeddingStore store = build_text_store(data.items, vocab);
  write_store(store, s.str("out"));
  write_text_file(join_path(dir, "config.embed-text.resolved"), s.format());
  out << "wrote " << store.size() << " text vectors of dim " << store.dim() << " to "
      << s.str("out") << "\n";
}

// ---------------------------------------------------------------------------
// train

inline TrainConfig train_config_from(const Settings& s) {
  TrainConfig c;
  c.learning_rate = s.real("learning_rate");
  c.batch_size = s.count("batch_size");
  c.beta = s.real("beta");
  c.lambda_l2 = s.real("lambda_l2");
  c.hidden_d = s.count("hidden_d");
  c.steps_T = s.count("steps_T");
  c.optimizer = parse_optimizer(s.str("optimizer"));
  c.max_epochs = s.count("max_epochs");
  c.patience = s.count("patience");
  c.validation_negatives = s.count("validation_negatives");
  c.min_delta = s.real("min_delta");
  c.seed = s.u64("seed");
  c.model = parse_model_kind(s.str("model"));
  c.modality = parse_modality(s.str("modality"));
  c.threads = s.count("threads");
  c.clip_norm = s.real("clip_norm");
  c.validate();
  return c;
}

inline void run_train(Settings& s, std::ostream& out) {
  resolve_store_paths(s);
  const TrainConfig cfg = train_config_from(s);
  const std::string run_dir = s.str("run_dir");

  const Prepared prep = load_prepared(s.str("prepared_dir"));
  ModelConfig mc;
  mc.kind = cfg.model;
  mc.modality = {cfg.modality, cfg.beta};
  mc.hidden = cfg.hidden_d;
  mc.steps = cfg.steps_T;
  mc.categories = prep.categories;
  const LoadedStores stores = load_stores(s, mc.modality);
  mc.visual_dim = stores.visual ? stores.visual->dim() : 0;
  mc.text_dim = stores.text ? stores.text->dim() : 0;

  write_resolved(s, run_dir);
  CompatModel model(mc, derive_seed(cfg.seed, {0x3a0de1}));
  TrainData data{&prep.split.train, &prep.split.validation,
                 {&prep.data.items, stores.view(), &prep.graph}};
  const TrainResult result = train(cfg, model, data, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss=" << format_double(r.train_loss)
        << " val_loss=" << format_double(r.val_loss) << " val_auc=" << format_double(r.val_auc)
        << " (" << format_double(r.seconds, "%.1f") << "s)\n";
    out.flush();
  });
  write_run_artifacts(result, run_dir);
  out << "best epoch " << result.best_epoch << " of " << result.history.epochs.size()
      << (result.stopped_early ? " (early stop)" : "") << "; checkpoints in " << run_dir << "\n";
}

// ---------------------------------------------------------------------------
// eval

inline const std::vector<Outfit>& split_part(const DatasetSplit& split, const std::string& name) {
  if (name == "test") return split.test;
  if (name == "validation") return split.validation;
  if (name == "train") return split.train;
  throw ArgumentError("unknown split '" + name + "' (expected train, validation or test)");
}

inline EvalReport run_eval(Settings& s, std::ostream& out) {
  resolve_store_paths(s);
  const std::string task = s.str("task");
  if (task != "fitb" && task != "compat" && task != "both")
    throw ArgumentError("unknown task '" + task + "' (expected fitb, compat or both)");
  const bool random = s.flag("random_baseline");
  if (!random && s.str("checkpoint").empty())
    throw ArgumentError("eval needs --checkpoint or --random-baseline");
  if (s.str("out_dir").empty())
    s.set("out_dir", random ? join_path(s.str("prepared_dir"), "eval-random")
                            : join_path(fs::path(s.str("checkpoint")).parent_path().string(),
                                        "eval"));
  const std::uint64_t seed = s.u64("seed");
  const std::size_t threads = s.count("threads");
  if (threads == 0) throw ArgumentError("threads must be positive");
  const std::string dir = s.str("out_dir");

  const Prepared prep = load_prepared(s.str("prepared_dir"));
  const auto& outfits = split_part(prep.split, s.str("split"));
  if (outfits.empty()) throw DatasetError("the " + s.str("split") + " split is empty");
  const ItemPool corpus = item_pool(outfits);

  EvalReport report;
  report.seed = seed;
  std::optional<CompatModel> model;
  LoadedStores stores;
  OutfitScorer scorer;
  if (random) {
    report.model_id = "random";
    report.modality = "none";
    scorer = random_scorer(derive_seed(seed, {0x4a9d}));
  } else {
    model = load_model(s.str("checkpoint"), prep.categories);
    report.model_id = std::string(to_string(model->config().kind));
    report.modality = std::string(to_string(model->config().modality.mode));
    stores = load_stores(s, model->config().modality);
    check_store_dims(model->config(), stores);
    scorer = model_scorer(*model, {&prep.data.items, stores.view(), &prep.graph});
  }

  write_resolved(s, dir);
  if (task != "compat") {
    const auto questions = build_fitb_questions(outfits, corpus, seed);
    write_text_file(join_path(dir, "fitb_questions.json"), format_fitb_questions(questions));
    report.n_fitb_questions = questions.size();
    report.fitb_accuracy = fitb_accuracy(scorer, questions, threads);
  }
  if (task != "fitb") {
    const auto pairs = build_compat_pairs(outfits, corpus, seed);
    write_text_file(join_path(dir, "compat_pairs.json"), format_compat_pairs(pairs));
    report.n_compat_pairs = pairs.size();
    report.auc = compat_auc(scorer, pairs, threads);
  }
  report.timestamp = report_timestamp();
  emit_report(report, join_path(dir, "report.json"));
  write_text_file(join_path(dir, "report.txt"), format_report_table({report}));

  out << report.model_id << " (" << report.modality << ")";
  if (report.fitb_accuracy)
    out << " FITB " << format_double(*report.fitb_accuracy, "%.4f") << " over "
        << report.n_fitb_questions << " questions";
  if (report.auc)
    out << (report.fitb_accuracy ? "," : "") << " AUC " << format_double(*report.auc, "%.4f")
        << " over " << report.n_compat_pairs << " pairs";
  out << "\n";
  return report;
}

// ---------------------------------------------------------------------------
// score

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',' || c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

inline double run_score(Settings& s, std::ostream& out) {
  resolve_store_paths(s);
  if (s.str("checkpoint").empty()) throw ArgumentError("score needs --checkpoint");
  Outfit outfit;
  outfit.set_id = "query";
  outfit.items = split_list(s.str("items"));
  if (outfit.items.empty()) throw ArgumentError("score needs at least one item id");

  const Prepared prep = load_prepared(s.str("prepared_dir"));
  for (const auto& id : outfit.items)
    if (!prep.data.items.contains(id)) throw LookupError("unknown item id '" + id + "'");
  const CompatModel model = load_model(s.str("checkpoint"), prep.categories);
  const LoadedStores stores = load_stores(s, model.config().modality);
  check_store_dims(model.config(), stores);
  if (!s.str("out_dir").empty()) write_resolved(s, s.str("out_dir"));

  const double score =
      model.score(model.make_input(outfit, prep.data.items, stores.view(), &prep.graph));
  out << format_double(score) << "\n";
  return score;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckCase {
  ModelKind kind;
  Modality modality;
  GradCheckResult result;
};

// Score of one 3-item synthetic outfit, for both models and all modalities,
// at the default hidden size and steps.
inline std::vector<GradCheckCase> run_gradchecks(std::uint64_t seed, bool inject_bug) {
  SyntheticConfig sc;
  sc.n_outfits = 40;
  sc.n_categories = 6;
  sc.items_per_category = 4;
  sc.planted_groups = 2;
  sc.feature_dim = 4;
  sc.min_outfit_size = 3;
  sc.max_outfit_size = 3;
  sc.seed = seed;
  const SyntheticDataset ds = generate_synthetic(sc);
  const Vocabulary vocab = build_vocabulary(ds.data.items, 1);
  const EmbeddingStore text = build_text_store(ds.data.items, vocab);
  const CategoryGraph graph = build_cooccurrence_graph(ds.data.outfits, ds.data.items);
  const Outfit& outfit = ds.data.outfits.front();
  const FeatureStores stores{&ds.visual, &text};
  const TrainConfig defaults;

  std::vector<GradCheckCase> cases;
  for (ModelKind kind : {ModelKind::ngnn, ModelKind::hgnn}) {
    for (Modality mod : {Modality::visual, Modality::textual, Modality::multimodal}) {
      ModelConfig mc;
      mc.kind = kind;
      mc.modality = {mod, defaults.beta};
      mc.hidden = defaults.hidden_d;
      mc.steps = defaults.steps_T;
      for (std::size_t c = 0; c < sc.n_categories; ++c)
        mc.categories.push_back(kSyntheticCategoryBase + static_cast<CategoryId>(c));
      mc.visual_dim = ds.visual.dim();
      mc.text_dim = text.dim();
      const CompatModel model(mc, derive_seed(seed, {0x6c, static_cast<std::uint64_t>(kind),
                                                     static_cast<std::uint64_t>(mod)}));
      const ModelInput in = model.make_input(outfit, ds.data.items, stores, &graph);

      auto loss = [&](const ParamSet& p) { return CompatModel(mc, p).score(in); };
      auto analytic = [&](const ParamSet& p) {
        const CompatModel m(mc, p);
        ParamSet dense = m.backward(m.forward(in), 1.0).to_dense(p);
        if (inject_bug) {
          const std::string target =
              std::string(mod == Modality::textual ? "text" : "visual") + ".att.W";
          for (double& x : dense.mutable_tensor(dense.index_of(target)).data()) x *= 1.01;
        }
        return dense;
      };
      cases.push_back({kind, mod, grad_check(loss, analytic, model.params())});
    }
  }
  return cases;
}

inline void run_gradcheck(const Settings& s, std::ostream& out) {
  const double threshold = s.real("threshold");
  if (!s.str("out_dir").empty()) write_resolved(s, s.str("out_dir"));
  const auto cases = run_gradchecks(s.u64("seed"), s.flag("inject_bug"));
  const GradCheckCase* worst = nullptr;
  for (const auto& c : cases) {
    const bool ok = c.result.max_relative_error < threshold;
    out << to_string(c.kind) << " " << to_string(c.modality)
        << " max_rel_error=" << format_double(c.result.max_relative_error, "%.3e")
        << " worst=" << c.result.worst_parameter << " coordinates=" << c.result.coordinates
        << (ok ? " ok" : " FAIL") << "\n";
    if (!worst || c.result.max_relative_error > worst->result.max_relative_error) worst = &c;
  }
  if (worst && !(worst->result.max_relative_error < threshold))
    throw VerificationError("gradient check failed: " + std::string(to_string(worst->kind)) + " " +
                            std::string(to_string(worst->modality)) + " max relative error " +
                            format_double(worst->result.max_relative_error, "%.3e") + " at " +
                            worst->result.worst_parameter + " (analytic " +
                            format_double(worst->result.analytic, "%.9g") + ", numeric " +
                            format_double(worst->result.numeric, "%.9g") + ")");
}

}  // namespace compat::cli
