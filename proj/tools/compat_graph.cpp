#include <iostream>
#include <list>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using compat::Settings;

const std::map<std::string, std::string> kHelp = {
    {"out_dir", "output directory"},
    {"data_dir", "directory with outfits.json or the three Polyvore split files"},
    {"prepared_dir", "directory written by `prepare`"},
    {"run_dir", "directory for checkpoints and history"},
    {"visual_store", "visual EMBD store (default <prepared_dir>/visual.embd)"},
    {"text_store", "text EMBD store (default <prepared_dir>/text.embd)"},
    {"checkpoint", "checkpoint file"},
    {"seed", "random seed (default $COMPAT_GRAPH_SEED or 1)"},
    {"threads", "worker threads; results do not depend on it"},
    {"subset", "keep this many filtered outfits (0 = all)"},
    {"task", "fitb, compat or both"},
    {"split", "train, validation or test"},
    {"model", "ngnn or hgnn"},
    {"modality", "visual, textual or multimodal"},
    {"optimizer", "adam or rmsprop"},
    {"random_baseline", "score with a seeded random scorer instead of a checkpoint"},
    {"out", "output store path (default <prepared_dir>/text.embd)"},
};

const std::set<std::string> kFlags = {"random_baseline", "inject_bug"};

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

// One subcommand: its settings table plus what the command line supplied.
struct Command {
  Settings settings;
  std::string config_path;
  std::map<std::string, std::string> given;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> positional;
  CLI::App* app = nullptr;

  void bind(CLI::App& parent, const std::string& name, const std::string& description,
            Settings table) {
    settings = std::move(table);
    app = parent.add_subcommand(name, description);
    app->add_option("--config", config_path, "flat `key = value` file; flags override it");
    for (const auto& [key, value] : settings.values()) {
      if (key == "items") continue;
      const auto help_it = kHelp.find(key);
      const std::string help = help_it == kHelp.end() ? "" : help_it->second;
      CLI::Option* opt;
      if (kFlags.count(key)) {
        opt = app->add_flag(dashed(key), flags[key], help);
      } else {
        opt = app->add_option(dashed(key), given[key], help);
        if (!value.empty()) opt->description(help + (help.empty() ? "" : " ") + "[" + value + "]");
      }
      if (key == "inject_bug") opt->group("");
      options[key] = opt;
    }
  }

  // defaults < config file < flags
  Settings resolve() {
    Settings s = settings;
    if (!config_path.empty()) {
      try {
        s.merge(compat::load_config_file(config_path));
      } catch (const compat::ParseError& e) {
        throw compat::ArgumentError(std::string("bad config file: ") + e.what());
      } catch (const compat::StructuralError& e) {
        throw compat::ArgumentError(std::string("bad config file: ") + e.what());
      }
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (kFlags.count(key))
        s.set(key, flags[key] ? "true" : "false");
      else
        s.set(key, given[key]);
    }
    if (!positional.empty()) {
      std::string joined;
      for (const auto& id : positional) joined += (joined.empty() ? "" : ",") + id;
      s.set("items", joined);
    }
    return s;
  }
};

}  // namespace

int main(int argc, char** argv) {
  namespace cli = compat::cli;
  CLI::App app{"Outfit compatibility scoring with category-graph and hypergraph models"};
  app.require_subcommand(1);

  std::list<Command> commands;
  auto add = [&](const std::string& name, const std::string& desc, Settings table) -> Command& {
    auto& c = commands.emplace_back();
    c.bind(app, name, desc, std::move(table));
    return c;
  };

  try {
    auto& synth = add("synth", "generate a planted-group synthetic dataset", cli::synth_settings());
    auto& prepare = add("prepare", "filter, subset and split outfits; build vocabulary and graphs",
                        cli::prepare_settings());
    auto& embed = add("embed-text", "write the one-hot text store for prepared items",
                      cli::embed_text_settings());
    auto& train = add("train", "train a model with the pairwise ranking loss",
                      cli::train_settings());
    auto& eval = add("eval", "evaluate FITB accuracy and compatibility AUC",
                     cli::eval_settings());
    auto& score = add("score", "score one set of items", cli::score_settings());
    score.app->add_option("items", score.positional, "item ids (<set_id>_<index>)");
    auto& gradcheck = add("gradcheck", "compare analytic gradients with finite differences",
                          cli::gradcheck_settings());

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? cli::kOk : cli::kUsage;
    }

    if (*synth.app) {
      cli::run_synth(synth.resolve(), std::cout);
    } else if (*prepare.app) {
      cli::run_prepare(prepare.resolve(), std::cout);
    } else if (*embed.app) {
      Settings s = embed.resolve();
      cli::run_embed_text(s, std::cout);
    } else if (*train.app) {
      Settings s = train.resolve();
      cli::run_train(s, std::cout);
    } else if (*eval.app) {
      Settings s = eval.resolve();
      cli::run_eval(s, std::cout);
    } else if (*score.app) {
      Settings s = score.resolve();
      cli::run_score(s, std::cout);
    } else if (*gradcheck.app) {
      cli::run_gradcheck(gradcheck.resolve(), std::cout);
    }
    return cli::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
}
