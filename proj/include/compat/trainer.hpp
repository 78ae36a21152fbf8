#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "compat/checkpoint.hpp"
#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/evaluator.hpp"
#include "compat/graph.hpp"
#include "compat/model.hpp"
#include "compat/optimizer.hpp"
#include "compat/parallel.hpp"
#include "compat/random.hpp"

namespace compat {

// What a model needs besides its parameters to score an outfit.
struct ScoringContext {
  const ItemTable* items = nullptr;
  FeatureStores stores;
  const CategoryGraph* graph = nullptr;  // NGNN only
};

inline OutfitScorer model_scorer(const CompatModel& model, ScoringContext ctx) {
  return [&model, ctx](const Outfit& outfit) {
    return model.score(model.make_input(outfit, *ctx.items, ctx.stores, ctx.graph));
  };
}

// ---------------------------------------------------------------------------
// Loss

// -ln(sigmoid(x)), stable for large |x|.
inline double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

// Sum of squares over weight tensors (biases and edge logits excluded).
inline double l2_penalty(const ParamSet& params) {
  double sum = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.role(i) == ParamRole::weight)
      for (double x : params.tensor(i).data()) sum += x * x;
  return sum;
}

inline void add_l2_gradient(const ParamSet& params, double lambda, Gradients& grads) {
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.role(i) == ParamRole::weight)
      add_to(grads.touch(i).data(), params.tensor(i).data(), 2.0 * lambda);
}

// L = -ln(sigmoid(s_pos - s_neg)) + lambda * sum ||W||^2
inline double bpr_loss(double s_pos, double s_neg, double lambda_l2, const ParamSet& params) {
  return neg_log_sigmoid(s_pos - s_neg) + lambda_l2 * l2_penalty(params);
}

// ---------------------------------------------------------------------------
// Configuration and history

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 16;
  double beta = 0.2;
  double lambda_l2 = 0.001;
  std::size_t hidden_d = 12;
  std::size_t steps_T = 3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::uint64_t seed = 1;
  ModelKind model = ModelKind::ngnn;
  Modality modality = Modality::multimodal;
  std::size_t threads = 1;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
  std::size_t validation_negatives = 5;  // fixed negatives drawn per validation outfit

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ArgumentError("learning_rate must be >= 0");
    if (batch_size == 0) throw ArgumentError("batch_size must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("beta must lie in [0, 1]");
    if (!(lambda_l2 >= 0.0)) throw ArgumentError("lambda_l2 must be >= 0");
    if (hidden_d == 0) throw ArgumentError("hidden_d must be positive");
    if (max_epochs == 0) throw ArgumentError("max_epochs must be positive");
    if (patience == 0) throw ArgumentError("patience must be positive");
    if (!(min_delta >= 0.0)) throw ArgumentError("min_delta must be >= 0");
    if (threads == 0) throw ArgumentError("threads must be positive");
    if (!(clip_norm >= 0.0)) throw ArgumentError("clip_norm must be >= 0");
    if (validation_negatives == 0) throw ArgumentError("validation_negatives must be positive");
  }

  OptimizerConfig optimizer_config() const {
    OptimizerConfig c;
    c.kind = optimizer;
    c.learning_rate = learning_rate;
    return c;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  std::vector<double> val_losses() const {
    std::vector<double> v;
    for (const auto& e : epochs) v.push_back(e.val_loss);
    return v;
  }

  // CSV `epoch,train_loss,val_loss,val_auc`. 17 significant digits so
  // reruns compare bit for bit.
  std::string to_csv() const {
    std::string out = "epoch,train_loss,val_loss,val_auc\n";
    char buf[160];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                    e.val_loss, e.val_auc);
      out += buf;
    }
    return out;
  }

  // Wall-clock seconds per epoch; kept apart since it never reproduces.
  std::string timing_csv() const {
    std::string out = "epoch,seconds\n";
    char buf[64];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%.3f\n", e.epoch, e.seconds);
      out += buf;
    }
    return out;
  }
};

// True iff each of the last `patience` epochs improved the validation loss
// by less than `min_delta` over the best loss recorded before it.
inline bool early_stop_check(const std::vector<double>& val_losses, std::size_t patience,
                             double min_delta) {
  const std::size_t n = val_losses.size();
  if (patience == 0 || n < patience + 1) return false;
  for (std::size_t e = n - patience; e < n; ++e) {
    const double best_before =
        *std::min_element(val_losses.begin(), val_losses.begin() + static_cast<std::ptrdiff_t>(e));
    if (best_before - val_losses[e] >= min_delta) return false;
  }
  return true;
}

inline bool early_stop_check(const TrainHistory& h, std::size_t patience, double min_delta) {
  return early_stop_check(h.val_losses(), patience, min_delta);
}

// ---------------------------------------------------------------------------
// Training

struct TrainData {
  const std::vector<Outfit>* train = nullptr;
  const std::vector<Outfit>* validation = nullptr;
  ScoringContext context;
};

struct TrainResult {
  CompatModel best;
  CompatModel last;
  OptimizerState best_optimizer;
  OptimizerState last_optimizer;
  TrainHistory history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct PairOutcome {
  double loss = 0.0;
  double positive = 0.0;
  double negative = 0.0;
};

// Scores a positive/negative pair and, when `grads` is given, adds
// `scale` * dL/dtheta of the pairwise term into it.
inline PairOutcome pair_loss_and_gradient(const CompatModel& model, const ScoringContext& ctx,
                                          const Outfit& positive, const Outfit& negative,
                                          Gradients* grads, double scale = 1.0) {
  const ForwardCache pos =
      model.forward(model.make_input(positive, *ctx.items, ctx.stores, ctx.graph));
  const ForwardCache neg =
      model.forward(model.make_input(negative, *ctx.items, ctx.stores, ctx.graph));
  const double delta = pos.score - neg.score;
  PairOutcome out{neg_log_sigmoid(delta), pos.score, neg.score};
  if (grads) {
    const double slope = sigmoid(-delta);  // -dL/d(delta)
    model.backward(pos, -slope * scale, *grads);
    model.backward(neg, slope * scale, *grads);
  }
  return out;
}

inline void clip_gradients(Gradients& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (double x : grads.slot(i).data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) grads.scale(max_norm / norm);
}

struct ValidationResult {
  double loss = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
};

inline ValidationResult validate_pairs(const CompatModel& model, const ScoringContext& ctx,
                                       const std::vector<CompatPair>& pairs, double lambda_l2,
                                       std::size_t threads) {
  std::vector<PairOutcome> outcomes(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    outcomes[k] =
        pair_loss_and_gradient(model, ctx, pairs[k].positive, pairs[k].negative, nullptr);
  });
  ValidationResult r;
  std::vector<double> pos, neg;
  double sum = 0.0;
  for (const auto& o : outcomes) {
    sum += o.loss;
    pos.push_back(o.positive);
    neg.push_back(o.negative);
  }
  r.loss = sum / static_cast<double>(pairs.size()) + lambda_l2 * l2_penalty(model.params());
  r.auc = auc(std::move(pos), std::move(neg));
  return r;
}

// Pairwise-ranking training: every epoch reshuffles the training outfits,
// draws a fresh negative per outfit, and takes one optimizer step per
// batch. Early stopping watches the validation loss; the returned `best`
// model is the one with the lowest validation loss seen.
inline TrainResult train(const TrainConfig& cfg, CompatModel model, const TrainData& data,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (data.train == nullptr || data.train->empty()) throw DatasetError("no training outfits");
  const auto& train_set = *data.train;
  const auto& ctx = data.context;

  const NegativeSampler train_sampler(item_pool(train_set));
  std::vector<CompatPair> val_pairs;
  const bool has_validation = data.validation != nullptr && !data.validation->empty();
  if (has_validation) {
    const ItemPool val_pool = item_pool(*data.validation);
    for (std::size_t r = 0; r < cfg.validation_negatives; ++r) {
      auto round = build_compat_pairs(*data.validation, val_pool, derive_seed(cfg.seed, {0x7a1, r}));
      val_pairs.insert(val_pairs.end(), round.begin(), round.end());
    }
  }

  OptimizerState state = OptimizerState::fresh(model.params(), cfg.optimizer_config());
  TrainResult result{model, model, state, state, {}, 0, false};
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {0xe90c, epoch}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    const std::size_t n_batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::size_t size = hi - lo;
      const double inv = 1.0 / static_cast<double>(size);

      std::vector<Gradients> per_outfit(size);
      std::vector<double> losses(size);
      parallel_for(size, cfg.threads, [&](std::size_t k) {
        const std::size_t pos = lo + k;
        const Outfit& outfit = train_set[order[pos]];
        Rng rng(derive_seed(cfg.seed, {0xb9, epoch, pos}));
        const CompatPair pair = train_sampler.negative_for(outfit, rng);
        per_outfit[k] = Gradients(model.params());
        losses[k] = pair_loss_and_gradient(model, ctx, pair.positive, pair.negative,
                                           &per_outfit[k], inv)
                        .loss;
      });

      Gradients grads(model.params());
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < size; ++k) {
        grads.add(per_outfit[k]);
        batch_loss += losses[k];
      }
      batch_loss = batch_loss * inv + cfg.lambda_l2 * l2_penalty(model.params());
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b + 1));
      add_l2_gradient(model.params(), cfg.lambda_l2, grads);
      clip_gradients(grads, cfg.clip_norm);
      optimizer_step(model.params(), grads, state);
      loss_sum += batch_loss * static_cast<double>(size);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (has_validation) {
      const auto v = validate_pairs(model, ctx, val_pairs, cfg.lambda_l2, cfg.threads);
      rec.val_loss = v.loss;
      rec.val_auc = v.auc;
    } else {
      rec.val_loss = rec.train_loss;
      rec.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(rec.val_loss))
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.best = model;
      result.best_optimizer = state;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    if (early_stop_check(result.history, cfg.patience, cfg.min_delta)) {
      result.stopped_early = true;
      break;
    }
  }
  result.last = std::move(model);
  result.last_optimizer = std::move(state);
  return result;
}

// best.ckpt, last.ckpt, history.csv and timing.csv under run_dir.
inline void write_run_artifacts(const TrainResult& result, const std::string& run_dir) {
  std::filesystem::create_directories(run_dir);
  auto save = [&](const CompatModel& m, const OptimizerState& s, const std::string& name,
                  std::size_t epoch) {
    Checkpoint ck = m.to_checkpoint();
    store_optimizer(ck, m.params(), s);
    ck.metadata["epoch"] = std::to_string(epoch);
    write_checkpoint(ck, run_dir + "/" + name);
  };
  save(result.best, result.best_optimizer, "best.ckpt", result.best_epoch);
  save(result.last, result.last_optimizer, "last.ckpt", result.history.epochs.size());
  write_text_file(run_dir + "/history.csv", result.history.to_csv());
  write_text_file(run_dir + "/timing.csv", result.history.timing_csv());
}

}  // namespace compat
