// Acceptance run: one PASS/FAIL/SKIP line per criterion. Exits non-zero if
// any criterion fails.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace compat;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void skip(const std::string& name, const std::string& why) {
  std::cout << "SKIP " << name << ": " << why << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, const char* f = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(COMPAT_GRAPH_EXE) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// ---------------------------------------------------------------------------

void random_baseline() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.n_outfits = 3000;
  sc.seed = 21;
  const auto ds = generate_synthetic(sc);
  const auto& outfits = ds.data.outfits;
  const auto pool = item_pool(outfits);
  const auto questions = build_fitb_questions(outfits, pool, 5);
  const auto pairs = build_compat_pairs(outfits, pool, 6);
  const auto scorer = random_scorer(7);
  const double acc = fitb_accuracy(scorer, questions);
  const double a = compat_auc(scorer, pairs);
  const double secs = seconds_since(t0);
  const bool ok = questions.size() >= 2000 && pairs.size() >= 2000 &&
                  std::abs(acc - 0.25) <= 0.02 && std::abs(a - 0.5) <= 0.02 && secs < 60;
  report("random-baseline calibration", ok,
         "FITB " + fmt(acc) + " over " + std::to_string(questions.size()) + " questions, AUC " +
             fmt(a) + " over " + std::to_string(pairs.size()) + " pairs (targets 0.25 and 0.50 ± 0.02), " +
             fmt(secs, "%.1f") + "s");
}

void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = cli("gradcheck");
  const double secs = seconds_since(t0);
  std::istringstream in(r.output);
  std::string line;
  std::size_t cases = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    const auto at = line.find("max_rel_error=");
    if (at == std::string::npos) continue;
    ++cases;
    worst = std::max(worst, std::stod(line.substr(at + 14)));
  }
  const bool ok = r.code == 0 && cases == 6 && worst < 1e-6 && secs < 60;
  report("gradient correctness", ok,
         std::to_string(cases) + " model/modality cases, worst relative error " +
             fmt(worst, "%.3e") + " (< 1e-6), " + fmt(secs, "%.1f") + "s");
}

void learnability() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticConfig sc;
  sc.n_outfits = 1600;
  sc.n_categories = 24;
  sc.planted_groups = 8;
  sc.noise = 0.0;
  sc.feature_dim = 512;
  sc.signal_scale = 2.0;
  sc.feature_noise = 0.25;
  sc.max_outfit_size = 5;
  sc.seed = 1;
  const auto ds = generate_synthetic(sc);
  const auto filtered = filter_dataset(ds.data.outfits, ds.data.items, 100, 3);
  const auto split = split_dataset(filtered.outfits, 0.7, 1, 0.1, filtered.category_set);
  const ItemTable train_items = ds.data.items.restricted_to(split.train);
  const std::vector<Item> train_list(train_items.begin(), train_items.end());
  const auto vocab = build_vocabulary(train_list, 3);
  const auto text = build_text_store(ds.data.items, vocab);
  const auto graph = build_cooccurrence_graph(split.train, ds.data.items);

  TrainConfig tc;  // lr 0.001, batch 16, d 12, T 3
  tc.model = ModelKind::ngnn;
  tc.modality = Modality::visual;
  tc.optimizer = OptimizerKind::rmsprop;
  tc.max_epochs = 15;
  tc.patience = 15;  // use the whole epoch budget
  tc.seed = 1;
  ModelConfig mc;
  mc.kind = tc.model;
  mc.modality = {tc.modality, tc.beta};
  mc.hidden = tc.hidden_d;
  mc.steps = tc.steps_T;
  mc.categories.assign(filtered.category_set.begin(), filtered.category_set.end());
  mc.visual_dim = ds.visual.dim();
  mc.text_dim = text.dim();
  const ScoringContext ctx{&ds.data.items, {&ds.visual, &text}, &graph};
  const auto result =
      train(tc, CompatModel(mc, 1), {&split.train, &split.validation, ctx});

  const auto pool = item_pool(split.test);
  const auto questions = build_fitb_questions(split.test, pool, 7);
  const auto pairs = build_compat_pairs(split.test, pool, 7);
  const auto scorer = model_scorer(result.best, ctx);
  const double acc = fitb_accuracy(scorer, questions);
  const double a = compat_auc(scorer, pairs);
  const double secs = seconds_since(t0);
  const bool ok = acc >= 0.60 && a >= 0.80 && secs < 600;
  report("learnability on planted structure", ok,
         "NGNN (visual, RMSProp, seed 1) after " +
             std::to_string(result.history.epochs.size()) +
             " epochs: held-out FITB " + fmt(acc) + " (>= 0.60), AUC " + fmt(a) +
             " (>= 0.80) over " + std::to_string(questions.size()) + " outfits, " +
             fmt(secs, "%.0f") + "s (< 600s)");
}

// Trains and evaluates on a prepared Polyvore subset, once.
struct PolyvoreRuns {
  bool available = false;
  std::string error;  // set when the data is present but a command failed
  std::map<std::string, EvalReport> reports;
};

const PolyvoreRuns& polyvore_runs() {
  static std::optional<PolyvoreRuns> cached;
  if (cached) return *cached;
  cached.emplace();
  PolyvoreRuns& out = *cached;
  const char* dir = std::getenv("POLYVORE_DIR");
  if (!dir || !*dir || !fs::exists(fs::path(dir) / "train_no_dup.json") ||
      !fs::exists(fs::path(dir) / "visual.embd"))
    return out;
  out.available = true;
  const std::string work = (fs::temp_directory_path() / "compat_acceptance_polyvore").string();
  fs::remove_all(work);
  const std::string prep = work + "/prep";
  auto step = [&](const std::string& args) {
    if (!out.error.empty()) return false;
    const auto r = cli(args);
    if (r.code != 0) out.error = "`" + args + "` exited " + std::to_string(r.code) + ": " + r.output;
    return r.code == 0;
  };
  if (!step("prepare --data-dir " + std::string(dir) + " --out-dir " + prep + " --subset 1600") ||
      !step("embed-text --prepared-dir " + prep))
    return out;
  const std::vector<std::pair<std::string, std::string>> runs{
      {"ngnn", "multimodal"}, {"hgnn", "multimodal"}, {"ngnn", "visual"}, {"ngnn", "textual"}};
  for (const auto& [model, modality] : runs) {
    const std::string run = work + "/" + model + "-" + modality;
    if (!step("train --prepared-dir " + prep + " --run-dir " + run + " --model " + model +
              " --modality " + modality) ||
        !step("eval --prepared-dir " + prep + " --checkpoint " + run + "/best.ckpt"))
      return out;
    out.reports[model + "-" + modality] = read_report(run + "/eval/report.json");
  }
  if (!step("eval --prepared-dir " + prep + " --random-baseline")) return out;
  out.reports["random"] = read_report(prep + "/eval-random/report.json");
  return out;
}

// Reports a SKIP or a FAIL when the Polyvore runs cannot be used.
bool polyvore_usable(const std::string& name, const PolyvoreRuns& r) {
  if (!r.available) {
    skip(name, "POLYVORE_DIR with the split files and visual.embd is not available");
    return false;
  }
  if (!r.error.empty()) {
    report(name, false, r.error);
    return false;
  }
  return true;
}

void polyvore_direction() {
  const std::string name = "directional reproduction on a Polyvore subset";
  const auto& r = polyvore_runs();
  if (!polyvore_usable(name, r)) return;
  const double rnd = *r.reports.at("random").fitb_accuracy;
  const double n_fitb = *r.reports.at("ngnn-multimodal").fitb_accuracy;
  const double h_fitb = *r.reports.at("hgnn-multimodal").fitb_accuracy;
  const double n_auc = *r.reports.at("ngnn-multimodal").auc;
  const double h_auc = *r.reports.at("hgnn-multimodal").auc;
  const bool ok = n_fitb >= rnd + 0.08 && h_fitb >= rnd + 0.08 && h_auc >= n_auc;
  report(name, ok,
         "FITB random " + fmt(rnd) + ", NGNN " + fmt(n_fitb) + ", HGNN " + fmt(h_fitb) +
             "; AUC NGNN " + fmt(n_auc) + " <= HGNN " + fmt(h_auc));
}

void polyvore_modality() {
  const std::string name = "modality ordering on a Polyvore subset";
  const auto& r = polyvore_runs();
  if (!polyvore_usable(name, r)) return;
  const double m = *r.reports.at("ngnn-multimodal").auc;
  const double v = *r.reports.at("ngnn-visual").auc;
  const double t = *r.reports.at("ngnn-textual").auc;
  report(name, m >= v && m >= t,
         "NGNN AUC multimodal " + fmt(m) + ", visual " + fmt(v) + ", textual " + fmt(t));
}

void auc_oracle() {
  std::mt19937_64 gen(99);
  std::size_t agree = 0, largest = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n1 = trial < 5 ? 1000 : 1 + gen() % 1000;
    const std::size_t n0 = trial < 5 ? 1000 : 1 + gen() % 1000;
    largest = std::max(largest, n1 * n0);
    std::uniform_int_distribution<int> u(0, trial % 2 ? 50 : 1000000);
    std::vector<double> pos(n1), neg(n0);
    for (auto& x : pos) x = u(gen) / 1000.0;
    for (auto& x : neg) x = u(gen) / 1000.0;
    double wins = 0.0;
    for (double p : pos)
      for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
    const double brute = wins / (static_cast<double>(n1) * static_cast<double>(n0));
    agree += auc(pos, neg) == brute;
  }
  report("AUC oracle equivalence", agree == 100,
         std::to_string(agree) + "/100 instances exactly equal to pair counting, largest " +
             std::to_string(largest) + " pairs");
}

void structural_invariants() {
  std::map<std::string, std::size_t> cases;
  std::vector<std::string> broken;
  std::mt19937_64 gen(2024);

  for (int trial = 0; trial < 1400; ++trial) {
    const std::size_t k = 2 + trial % 7;
    std::set<CategoryId> v;
    while (v.size() < k) v.insert(static_cast<CategoryId>(gen() % 1000));
    std::vector<CategoryId> e(v.begin(), v.end());
    std::shuffle(e.begin(), e.end(), gen);
    const auto c = convert_hyperedge(e);
    const std::set<CategoryPair> distinct(c.edges.begin(), c.edges.end());
    if (c.edges.size() != 2 * (k - 2) + 1 || distinct.size() != c.edges.size())
      broken.push_back("hyperedge conversion k=" + std::to_string(k));
    ++cases["hyperedge edge count (k = 2..8)"];
  }

  testing_support::Fixture fx(17, 150, 10);
  for (ModelKind kind : {ModelKind::ngnn, ModelKind::hgnn}) {
    CompatModel m(fx.model_config(kind, Modality::multimodal), 3);
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    for (std::size_t i = 0; i < m.params().size(); ++i)
      for (auto& x : m.params().mutable_tensor(i).data()) x = u(gen);
    for (int trial = 0; trial < 600; ++trial) {
      auto o = fx.ds.data.outfits[gen() % fx.ds.data.outfits.size()];
      const double s = fx.score(m, o);
      std::shuffle(o.items.begin(), o.items.end(), gen);
      if (fx.score(m, o) != s) broken.push_back("permutation invariance");
      ++cases["score permutation invariance"];

      const auto in = m.make_input(o, fx.ds.data.items, {&fx.ds.visual, &fx.text}, &fx.graph);
      std::set<CategoryId> present;
      for (const auto& node : in.structure.nodes) present.insert(node.category);
      const auto g = m.backward(m.forward(in), 1.0);
      for (std::size_t i = 0; i < m.params().size(); ++i) {
        const auto& name = m.params().name(i);
        const auto at = name.find(".cat");
        if (at == std::string::npos || !g.touched(i)) continue;
        const CategoryId c = std::stoll(name.substr(at + 4));
        if (present.count(c)) continue;
        for (double x : g.slot(i).data())
          if (x != 0.0) {
            broken.push_back("gradient leaked into " + name);
            break;
          }
      }
      ++cases["gradient category locality"];
    }
  }

  for (int trial = 0; trial < 1200; ++trial) {
    const auto data = testing_support::outfits_from_categories(
        testing_support::random_category_lists(gen, 30, 12, 1, 7));
    const std::size_t min_count = 1 + gen() % 6;
    try {
      const auto once = filter_dataset(data.outfits, data.items, min_count, 3);
      const auto twice = filter_dataset(once.outfits, data.items, min_count, 3);
      if (twice.outfits != once.outfits) broken.push_back("filter idempotence");
      ++cases["filter idempotence"];
    } catch (const DatasetError&) {
    }
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 80;
    const auto data = testing_support::outfits_from_categories(
        std::vector<std::vector<CategoryId>>(n, {1, 2, 3}));
    const double frac = 0.05 + 0.95 * std::uniform_real_distribution<double>(0, 1)(gen);
    const double val = 0.5 * std::uniform_real_distribution<double>(0, 1)(gen);
    const auto split = split_dataset(data.outfits, frac, gen(), val);
    std::set<std::string> seen;
    bool ok = true;
    for (const auto* part : {&split.train, &split.validation, &split.test})
      for (const auto& o : *part) ok = ok && seen.insert(o.set_id).second;
    if (!ok || seen.size() != n) broken.push_back("split disjointness");
    ++cases["split disjointness"];
  }

  std::string detail;
  bool enough = true;
  for (const auto& [name, n] : cases) {
    detail += (detail.empty() ? "" : ", ") + name + " " + std::to_string(n);
    enough = enough && n >= 1000;
  }
  if (!broken.empty()) detail += "; first violation: " + broken.front();
  report("structural invariants", broken.empty() && enough && cases.size() == 5, detail);
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "timing.csv")
      files[fs::relative(e.path(), root).string()] = read_text_file(e.path().string());
  return files;
}

void determinism() {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  testing_support::TempDir root("acceptance_det");
  // Both runs write to one directory; the first tree is snapshotted, then removed.
  const std::string d = root.file("work") + "/";
  auto pipeline = [&]() -> bool {
    return cli("synth --out-dir " + d + "raw --n-outfits 300 --n-categories 10").code == 0 &&
           cli("prepare --data-dir " + d + "raw --out-dir " + d +
               "prep --min-category-count 10")
                   .code == 0 &&
           cli("embed-text --prepared-dir " + d + "prep").code == 0 &&
           cli("train --prepared-dir " + d + "prep --run-dir " + d +
               "run --max-epochs 3 --threads 4 --model hgnn")
                   .code == 0 &&
           cli("eval --prepared-dir " + d + "prep --checkpoint " + d + "run/best.ckpt --threads 4")
                   .code == 0;
  };
  if (!pipeline()) {
    report("determinism", false, "a pipeline command failed");
    return;
  }
  const auto a = snapshot(root.file("work"));
  fs::remove_all(root.file("work"));
  if (!pipeline()) {
    report("determinism", false, "a pipeline command failed on the rerun");
    return;
  }
  const auto b = snapshot(root.file("work"));
  std::size_t differing = 0;
  std::string first;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      if (first.empty()) first = name;
    }
  }
  const bool ok = differing == 0 && a.size() == b.size();
  report("determinism", ok,
         std::to_string(a.size()) + " artifacts from prepare/train/eval with --threads 4 compared, " +
             std::to_string(differing) + " differ" + (first.empty() ? "" : " (first: " + first + ")"));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{
      random_baseline, gradient_correctness, learnability,          polyvore_direction,
      polyvore_modality, auc_oracle,         structural_invariants, determinism};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      report("criterion raised", false, e.what());
    }
  }
  std::cout << (failures == 0 ? "all criteria passed or skipped" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
