#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "compat/checkpoint.hpp"
#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/features.hpp"
#include "compat/graph.hpp"
#include "compat/tensor.hpp"

namespace compat {

enum class ModelKind { ngnn, hgnn };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::ngnn ? "ngnn" : "hgnn"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "ngnn") return ModelKind::ngnn;
  if (s == "hgnn") return ModelKind::hgnn;
  throw ArgumentError("unknown model '" + std::string(s) + "'");
}

enum class Channel : std::size_t { visual = 0, text = 1 };
inline constexpr std::array<Channel, 2> kChannels{Channel::visual, Channel::text};

inline std::string_view channel_name(Channel c) {
  return c == Channel::visual ? "visual" : "text";
}

// ---------------------------------------------------------------------------
// Layer primitives. Each forward records what its backward needs.

// GRU update cell; the message is the input:
//   z = sig(Wz m + Uz h + bz)     r = sig(Wr m + Ur h + br)
//   c = tanh(Wh m + Uh (r*h) + bh)     h' = (1 - z) * h + z * c
struct GruWeights {
  const Tensor& Wz; const Tensor& Uz; const Tensor& bz;
  const Tensor& Wr; const Tensor& Ur; const Tensor& br;
  const Tensor& Wh; const Tensor& Uh; const Tensor& bh;
};

struct GruGrads {
  Tensor& Wz; Tensor& Uz; Tensor& bz;
  Tensor& Wr; Tensor& Ur; Tensor& br;
  Tensor& Wh; Tensor& Uh; Tensor& bh;
};

struct GruTrace {
  Vec z, r, cand, rh, out;
};

inline GruTrace gru_forward(const GruWeights& w, const Vec& h, const Vec& m) {
  const std::size_t d = h.size();
  GruTrace t;
  t.z.assign(d, 0.0);
  t.r.assign(d, 0.0);
  t.cand.assign(d, 0.0);
  t.rh.assign(d, 0.0);
  t.out.assign(d, 0.0);
  Vec a(d), b(d);
  matvec(w.Wz, m, a);
  matvec(w.Uz, h, b);
  for (std::size_t k = 0; k < d; ++k) t.z[k] = sigmoid(a[k] + b[k] + w.bz[k]);
  matvec(w.Wr, m, a);
  matvec(w.Ur, h, b);
  for (std::size_t k = 0; k < d; ++k) {
    t.r[k] = sigmoid(a[k] + b[k] + w.br[k]);
    t.rh[k] = t.r[k] * h[k];
  }
  matvec(w.Wh, m, a);
  matvec(w.Uh, t.rh, b);
  for (std::size_t k = 0; k < d; ++k) {
    t.cand[k] = std::tanh(a[k] + b[k] + w.bh[k]);
    t.out[k] = (1.0 - t.z[k]) * h[k] + t.z[k] * t.cand[k];
  }
  return t;
}

// Accumulates parameter gradients; adds d/dh into `dh` and d/dm into `dm`.
inline void gru_backward(const GruWeights& w, GruGrads& g, const GruTrace& t, const Vec& h,
                         const Vec& m, const Vec& dout, Vec& dh, Vec& dm) {
  const std::size_t d = h.size();
  Vec dz(d), dcand_pre(d), dz_pre(d), dr_pre(d), drh(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    dz[k] = dout[k] * (t.cand[k] - h[k]);
    dh[k] += dout[k] * (1.0 - t.z[k]);
    dcand_pre[k] = dout[k] * t.z[k] * (1.0 - t.cand[k] * t.cand[k]);
  }
  outer_add(g.Wh, dcand_pre, m);
  outer_add(g.Uh, dcand_pre, t.rh);
  add_to(g.bh.data(), dcand_pre);
  matvec_transposed_add(w.Wh, dcand_pre, dm);
  matvec_transposed_add(w.Uh, dcand_pre, drh);
  for (std::size_t k = 0; k < d; ++k) {
    dh[k] += drh[k] * t.r[k];
    dr_pre[k] = drh[k] * h[k] * t.r[k] * (1.0 - t.r[k]);
    dz_pre[k] = dz[k] * t.z[k] * (1.0 - t.z[k]);
  }
  outer_add(g.Wz, dz_pre, m);
  outer_add(g.Uz, dz_pre, h);
  add_to(g.bz.data(), dz_pre);
  matvec_transposed_add(w.Wz, dz_pre, dm);
  matvec_transposed_add(w.Uz, dz_pre, dh);
  outer_add(g.Wr, dr_pre, m);
  outer_add(g.Ur, dr_pre, h);
  add_to(g.br.data(), dr_pre);
  matvec_transposed_add(w.Wr, dr_pre, dm);
  matvec_transposed_add(w.Ur, dr_pre, dh);
}

// Attention pooling head over final node states:
//   alpha_i = sig(u . tanh(Wa h_i))    s_i = sig(v . h_i)
//   S = (1/n) sum_i alpha_i s_i
struct HeadWeights {
  const Tensor& Wa;
  const Tensor& u;
  const Tensor& v;
};

struct HeadTrace {
  std::vector<Vec> hidden;  // tanh(Wa h_i)
  Vec gate;                 // alpha_i
  Vec node_score;           // s_i
  double score = 0.0;
};

inline HeadTrace attention_forward(const HeadWeights& w, const std::vector<Vec>& states) {
  HeadTrace t;
  const std::size_t n = states.size();
  if (n == 0) throw ModelError("cannot score an outfit with no nodes");
  double sum = 0.0;
  for (const Vec& h : states) {
    Vec g(h.size());
    matvec(w.Wa, h, g);
    for (auto& x : g) x = std::tanh(x);
    const double alpha = sigmoid(dot(w.u.data(), g));
    const double s = sigmoid(dot(w.v.data(), h));
    t.hidden.push_back(std::move(g));
    t.gate.push_back(alpha);
    t.node_score.push_back(s);
    sum += alpha * s;
  }
  t.score = sum / static_cast<double>(n);
  return t;
}

inline void attention_backward(const HeadWeights& w, Tensor& dWa, Tensor& du, Tensor& dv,
                               const HeadTrace& t, const std::vector<Vec>& states,
                               double dscore, std::vector<Vec>& dstates) {
  const double n = static_cast<double>(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Vec& h = states[i];
    const double alpha = t.gate[i], s = t.node_score[i];
    const double dq = dscore * s / n * alpha * (1.0 - alpha);
    const double dp = dscore * alpha / n * s * (1.0 - s);
    const Vec& g = t.hidden[i];
    add_to(du.data(), g, dq);
    Vec dpre(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) dpre[k] = dq * w.u[k] * (1.0 - g[k] * g[k]);
    outer_add(dWa, dpre, h);
    matvec_transposed_add(w.Wa, dpre, dstates[i]);
    add_to(dv.data(), h, dp);
    add_to(dstates[i], w.v.data(), dp);
  }
}

// Softmax-normalized neighbor weights for one target node.
inline Vec neighbor_weights(std::span<const double> logits) {
  Vec w(logits.size());
  if (logits.empty()) return w;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (w[k] = std::exp(logits[k] - mx));
  for (auto& x : w) x /= z;
  return w;
}

// ---------------------------------------------------------------------------
// Model configuration and inputs

struct ModelConfig {
  ModelKind kind = ModelKind::ngnn;
  ModalityConfig modality;
  std::size_t hidden = 12;
  std::size_t steps = 3;
  std::vector<CategoryId> categories;  // retained categories, ascending
  std::size_t visual_dim = 0;
  std::size_t text_dim = 0;

  bool uses(Channel c) const {
    return c == Channel::visual ? modality.uses_visual() : modality.uses_text();
  }
  std::size_t input_dim(Channel c) const {
    return c == Channel::visual ? visual_dim : text_dim;
  }
  // Weight of a channel's score in the fused score.
  double channel_weight(Channel c) const {
    if (modality.mode != Modality::multimodal) return 1.0;
    return c == Channel::visual ? modality.beta : 1.0 - modality.beta;
  }
};

// Everything one outfit's forward pass needs: graph structure plus feature
// views [channel][node][item] into the embedding stores.
struct ModelInput {
  OutfitStructure structure;
  std::array<std::vector<std::vector<std::span<const double>>>, 2> features;
};

struct ChannelTrace {
  std::vector<std::size_t> category_pos;
  std::vector<std::vector<Vec>> item_activation;  // [node][item]
  std::vector<std::vector<Vec>> states;           // [t][node], t = 0..T
  std::vector<std::vector<Vec>> weights;          // [t][node] neighbor weights
  std::vector<std::vector<Vec>> messages;         // [t][node]
  std::vector<std::vector<GruTrace>> gru;         // [t][node]
  HeadTrace head;
};

class CompatModel;

struct ForwardCache {
  const CompatModel* model = nullptr;
  std::uint64_t revision = 0;
  ModelInput input;
  std::array<std::optional<ChannelTrace>, 2> channels;
  double score = 0.0;

  double channel_score(Channel c) const {
    const auto& t = channels[static_cast<std::size_t>(c)];
    if (!t) throw ModelError(std::string(channel_name(c)) + " channel was not evaluated");
    return t->head.score;
  }
};

// ---------------------------------------------------------------------------

// NGNN and HGNN share this model: category-specific input maps, softmax-
// normalized category-pair edge weights, a GRU update cell and the attention
// head. The kind only decides which edges an outfit's nodes exchange
// messages over (co-occurrence subgraph vs. converted hyperedge).
class CompatModel {
 public:
  CompatModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    validate();
    params_ = init_params(param_specs(), seed);
    index_layout();
  }

  CompatModel(ModelConfig config, ParamSet params)
      : config_(std::move(config)), params_(std::move(params)) {
    validate();
    const ParamSet expected = init_params(param_specs(), 0);
    if (!expected.same_layout(params_))
      throw StructuralError("parameter set does not match the model configuration");
    index_layout();
  }

  CompatModel(const CompatModel& o)
      : config_(o.config_), params_(o.params_), key_selector_(o.key_selector_) {
    index_layout();
  }
  CompatModel& operator=(const CompatModel& o) {
    config_ = o.config_;
    params_ = o.params_;
    key_selector_ = o.key_selector_;
    index_layout();
    return *this;
  }
  CompatModel(CompatModel&&) = default;
  CompatModel& operator=(CompatModel&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  void set_key_selector(KeySelector s) { key_selector_ = std::move(s); }

  std::vector<ParamSpec> param_specs() const {
    std::vector<ParamSpec> specs;
    const std::size_t d = config_.hidden;
    const std::size_t n_cat = config_.categories.size();
    for (Channel ch : kChannels) {
      if (!config_.uses(ch)) continue;
      const std::string p(channel_name(ch));
      for (CategoryId c : config_.categories) {
        const std::string base = p + ".cat" + std::to_string(c);
        specs.push_back({base + ".W", {d, config_.input_dim(ch)}, ParamRole::weight});
        specs.push_back({base + ".b", {d}, ParamRole::bias});
      }
      specs.push_back({p + ".edge", {n_cat, n_cat}, ParamRole::edge_logit});
      for (const char* gate : {"z", "r", "h"}) {
        specs.push_back({p + ".gru.W" + gate, {d, d}, ParamRole::weight});
        specs.push_back({p + ".gru.U" + gate, {d, d}, ParamRole::weight});
        specs.push_back({p + ".gru.b" + gate, {d}, ParamRole::bias});
      }
      specs.push_back({p + ".att.W", {d, d}, ParamRole::weight});
      specs.push_back({p + ".att.u", {d}, ParamRole::weight});
      specs.push_back({p + ".score.v", {d}, ParamRole::weight});
    }
    return specs;
  }

  std::optional<std::size_t> category_position(CategoryId c) const {
    auto it = std::lower_bound(config_.categories.begin(), config_.categories.end(), c);
    if (it == config_.categories.end() || *it != c) return std::nullopt;
    return static_cast<std::size_t>(it - config_.categories.begin());
  }

  // --- inputs ---------------------------------------------------------------

  ModelInput make_input(const Outfit& outfit, const ItemTable& items,
                        const FeatureStores& stores, const CategoryGraph* graph) const {
    ModelInput in;
    if (config_.kind == ModelKind::ngnn) {
      if (graph == nullptr) throw ArgumentError("NGNN scoring needs a co-occurrence graph");
      in.structure = extract_subgraph(outfit, items, *graph);
    } else {
      in.structure = hyperedge_structure(outfit, items, key_selector_);
    }
    for (const auto& node : in.structure.nodes)
      if (!category_position(node.category))
        throw ModelError("category " + std::to_string(node.category) +
                         " has no parameters (not a retained category)");
    for (Channel ch : kChannels) {
      if (!config_.uses(ch)) continue;
      auto& per_node = in.features[static_cast<std::size_t>(ch)];
      for (const auto& node : in.structure.nodes) {
        auto& feats = per_node.emplace_back();
        for (const auto& id : node.item_ids) {
          const ItemFeatures f = get_features(id, config_.modality, stores);
          const auto v = ch == Channel::visual ? f.visual : f.text;
          if (v.size() != config_.input_dim(ch))
            throw ModelError("item '" + id + "' has a " + std::to_string(v.size()) + "-dim " +
                             std::string(channel_name(ch)) + " vector; model expects " +
                             std::to_string(config_.input_dim(ch)));
          feats.push_back(v);
        }
      }
    }
    return in;
  }

  // --- forward --------------------------------------------------------------

  // Node states at t = 0: mean over the node's items of tanh(W_c x + b_c).
  std::vector<Vec> init_nodes(Channel ch, const ModelInput& in,
                              std::vector<std::vector<Vec>>* activations = nullptr) const {
    const auto& L = layout(ch);
    const std::size_t d = config_.hidden;
    const auto& feats = in.features[static_cast<std::size_t>(ch)];
    std::vector<Vec> states;
    for (std::size_t i = 0; i < in.structure.nodes.size(); ++i) {
      const auto pos = require_category(in.structure.nodes[i].category);
      const Tensor& W = params_.tensor(L.cat_W[pos]);
      const Tensor& b = params_.tensor(L.cat_b[pos]);
      Vec h(d, 0.0);
      std::vector<Vec> acts;
      for (auto x : feats.at(i)) {
        Vec a(d);
        matvec(W, x, a);
        for (std::size_t k = 0; k < d; ++k) {
          a[k] = std::tanh(a[k] + b[k]);
          h[k] += a[k];
        }
        acts.push_back(std::move(a));
      }
      if (acts.empty()) throw ModelError("graph node without items");
      for (auto& x : h) x /= static_cast<double>(acts.size());
      states.push_back(std::move(h));
      if (activations) activations->push_back(std::move(acts));
    }
    return states;
  }

  // T rounds of weighted message passing followed by the GRU update. Nodes
  // without neighbors receive a zero message.
  std::vector<Vec> propagate(Channel ch, const OutfitStructure& s, std::vector<Vec> states,
                             ChannelTrace* trace = nullptr) const {
    const auto& L = layout(ch);
    const GruWeights cell = gru_weights(L);
    const Tensor& edge = params_.tensor(L.edge);
    const std::size_t n = s.nodes.size();
    const std::size_t d = config_.hidden;
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = require_category(s.nodes[i].category);

    if (trace) trace->states.push_back(states);
    for (std::size_t t = 0; t < config_.steps; ++t) {
      std::vector<Vec> next(n), weights(n), messages(n);
      std::vector<GruTrace> grus(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& nb = s.neighbors[i];
        Vec logits(nb.size());
        for (std::size_t k = 0; k < nb.size(); ++k) logits[k] = edge(pos[nb[k]], pos[i]);
        weights[i] = neighbor_weights(logits);
        messages[i].assign(d, 0.0);
        for (std::size_t k = 0; k < nb.size(); ++k)
          add_to(messages[i], states[nb[k]], weights[i][k]);
        grus[i] = gru_forward(cell, states[i], messages[i]);
        next[i] = grus[i].out;
      }
      states = std::move(next);
      if (trace) {
        trace->weights.push_back(std::move(weights));
        trace->messages.push_back(std::move(messages));
        trace->gru.push_back(std::move(grus));
        trace->states.push_back(states);
      }
    }
    return states;
  }

  HeadTrace attention_score(Channel ch, const std::vector<Vec>& states) const {
    return attention_forward(head_weights(layout(ch)), states);
  }

  ChannelTrace forward_channel(Channel ch, const ModelInput& in) const {
    ChannelTrace tr;
    for (const auto& node : in.structure.nodes)
      tr.category_pos.push_back(require_category(node.category));
    auto h0 = init_nodes(ch, in, &tr.item_activation);
    auto hT = propagate(ch, in.structure, std::move(h0), &tr);
    tr.head = attention_score(ch, hT);
    return tr;
  }

  ForwardCache forward(ModelInput in) const {
    ForwardCache cache;
    cache.model = this;
    cache.revision = params_.revision();
    for (Channel ch : kChannels) {
      if (!config_.uses(ch)) continue;
      auto tr = forward_channel(ch, in);
      cache.score += config_.channel_weight(ch) * tr.head.score;
      cache.channels[static_cast<std::size_t>(ch)] = std::move(tr);
    }
    cache.input = std::move(in);
    return cache;
  }

  double score(const ModelInput& in) const { return forward(in).score; }

  // --- backward -------------------------------------------------------------

  // Adds upstream * dS/dtheta into `grads`. Only parameters this outfit
  // touches get a slot.
  void backward(const ForwardCache& cache, double upstream, Gradients& grads) const {
    if (cache.model != this || cache.revision != params_.revision())
      throw StructuralError("forward cache is stale or belongs to another model");
    if (grads.size() != params_.size())
      throw StructuralError("gradient set does not match the model parameters");
    for (Channel ch : kChannels) {
      const auto& tr = cache.channels[static_cast<std::size_t>(ch)];
      if (!tr) continue;
      backward_channel(ch, cache.input, *tr, upstream * config_.channel_weight(ch), grads);
    }
  }

  Gradients backward(const ForwardCache& cache, double upstream) const {
    Gradients g(params_);
    backward(cache, upstream, g);
    return g;
  }

  // --- checkpoint metadata --------------------------------------------------

  std::map<std::string, std::string> metadata() const {
    std::ostringstream cats;
    for (std::size_t i = 0; i < config_.categories.size(); ++i)
      cats << (i ? "," : "") << config_.categories[i];
    std::ostringstream beta;
    beta.precision(17);
    beta << config_.modality.beta;
    return {{"model", std::string(to_string(config_.kind))},
            {"modality", std::string(to_string(config_.modality.mode))},
            {"beta", beta.str()},
            {"hidden", std::to_string(config_.hidden)},
            {"steps", std::to_string(config_.steps)},
            {"categories", cats.str()},
            {"visual_dim", std::to_string(config_.visual_dim)},
            {"text_dim", std::to_string(config_.text_dim)}};
  }

  static ModelConfig config_from_metadata(const Checkpoint& ckpt) {
    ModelConfig c;
    try {
      c.kind = parse_model_kind(ckpt.meta("model"));
      c.modality.mode = parse_modality(ckpt.meta("modality"));
      c.modality.beta = std::stod(ckpt.meta("beta"));
      c.hidden = std::stoull(ckpt.meta("hidden"));
      c.steps = std::stoull(ckpt.meta("steps"));
      c.visual_dim = std::stoull(ckpt.meta("visual_dim"));
      c.text_dim = std::stoull(ckpt.meta("text_dim"));
      std::istringstream in(ckpt.meta("categories"));
      std::string tok;
      while (std::getline(in, tok, ',')) c.categories.push_back(std::stoll(tok));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
    }
    return c;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.params = to_named(params_);
    ck.metadata = metadata();
    return ck;
  }

  static CompatModel from_checkpoint(const Checkpoint& ckpt) {
    ModelConfig cfg = config_from_metadata(ckpt);
    CompatModel model(cfg, 0);
    load_named(model.params_, ckpt.params);
    return model;
  }

 private:
  struct Layout {
    std::vector<std::size_t> cat_W, cat_b;
    std::size_t edge = 0;
    std::size_t Wz = 0, Uz = 0, bz = 0, Wr = 0, Ur = 0, br = 0, Wh = 0, Uh = 0, bh = 0;
    std::size_t att_W = 0, att_u = 0, score_v = 0;
  };

  void validate() const {
    if (config_.hidden == 0) throw ArgumentError("hidden size must be positive");
    if (config_.categories.empty()) throw ArgumentError("model needs at least one category");
    if (!std::is_sorted(config_.categories.begin(), config_.categories.end()) ||
        std::adjacent_find(config_.categories.begin(), config_.categories.end()) !=
            config_.categories.end())
      throw ArgumentError("model categories must be ascending and unique");
    for (Channel ch : kChannels)
      if (config_.uses(ch) && config_.input_dim(ch) == 0)
        throw ArgumentError(std::string(channel_name(ch)) + " input dim must be positive");
    const double beta = config_.modality.beta;
    if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("beta must lie in [0, 1]");
  }

  void index_layout() {
    for (Channel ch : kChannels) {
      Layout& L = layouts_[static_cast<std::size_t>(ch)];
      L = Layout{};
      if (!config_.uses(ch)) continue;
      const std::string p(channel_name(ch));
      for (CategoryId c : config_.categories) {
        const std::string base = p + ".cat" + std::to_string(c);
        L.cat_W.push_back(params_.index_of(base + ".W"));
        L.cat_b.push_back(params_.index_of(base + ".b"));
      }
      L.edge = params_.index_of(p + ".edge");
      L.Wz = params_.index_of(p + ".gru.Wz");
      L.Uz = params_.index_of(p + ".gru.Uz");
      L.bz = params_.index_of(p + ".gru.bz");
      L.Wr = params_.index_of(p + ".gru.Wr");
      L.Ur = params_.index_of(p + ".gru.Ur");
      L.br = params_.index_of(p + ".gru.br");
      L.Wh = params_.index_of(p + ".gru.Wh");
      L.Uh = params_.index_of(p + ".gru.Uh");
      L.bh = params_.index_of(p + ".gru.bh");
      L.att_W = params_.index_of(p + ".att.W");
      L.att_u = params_.index_of(p + ".att.u");
      L.score_v = params_.index_of(p + ".score.v");
    }
  }

  const Layout& layout(Channel ch) const {
    if (!config_.uses(ch))
      throw ModelError(std::string(channel_name(ch)) + " channel is not part of this model");
    return layouts_[static_cast<std::size_t>(ch)];
  }

  std::size_t require_category(CategoryId c) const {
    if (auto p = category_position(c)) return *p;
    throw ModelError("category " + std::to_string(c) +
                     " has no parameters (not a retained category)");
  }

  GruWeights gru_weights(const Layout& L) const {
    const auto& P = params_;
    return {P.tensor(L.Wz), P.tensor(L.Uz), P.tensor(L.bz), P.tensor(L.Wr), P.tensor(L.Ur),
            P.tensor(L.br), P.tensor(L.Wh), P.tensor(L.Uh), P.tensor(L.bh)};
  }

  HeadWeights head_weights(const Layout& L) const {
    return {params_.tensor(L.att_W), params_.tensor(L.att_u), params_.tensor(L.score_v)};
  }

  void backward_channel(Channel ch, const ModelInput& in, const ChannelTrace& tr,
                        double dscore, Gradients& grads) const {
    const Layout& L = layout(ch);
    const std::size_t n = in.structure.nodes.size();
    const std::size_t d = config_.hidden;
    const std::size_t T = config_.steps;

    std::vector<Vec> dh(n, Vec(d, 0.0));
    attention_backward(head_weights(L), grads.touch(L.att_W), grads.touch(L.att_u),
                       grads.touch(L.score_v), tr.head, tr.states[T], dscore, dh);

    const GruWeights cell = gru_weights(L);
    GruGrads cell_grads{grads.touch(L.Wz), grads.touch(L.Uz), grads.touch(L.bz),
                        grads.touch(L.Wr), grads.touch(L.Ur), grads.touch(L.br),
                        grads.touch(L.Wh), grads.touch(L.Uh), grads.touch(L.bh)};
    Tensor& dedge = grads.touch(L.edge);

    for (std::size_t t = T; t-- > 0;) {
      const auto& h = tr.states[t];
      std::vector<Vec> dprev(n, Vec(d, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        Vec dm(d, 0.0);
        gru_backward(cell, cell_grads, tr.gru[t][i], h[i], tr.messages[t][i], dh[i], dprev[i],
                     dm);
        const auto& nb = in.structure.neighbors[i];
        if (nb.empty()) continue;
        const Vec& w = tr.weights[t][i];
        Vec dw(nb.size());
        double weighted = 0.0;
        for (std::size_t k = 0; k < nb.size(); ++k) {
          dw[k] = dot(dm, h[nb[k]]);
          weighted += w[k] * dw[k];
          add_to(dprev[nb[k]], dm, w[k]);
        }
        for (std::size_t k = 0; k < nb.size(); ++k)
          dedge(tr.category_pos[nb[k]], tr.category_pos[i]) += w[k] * (dw[k] - weighted);
      }
      dh = std::move(dprev);
    }

    const auto& feats = in.features[static_cast<std::size_t>(ch)];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = tr.category_pos[i];
      Tensor& dW = grads.touch(L.cat_W[pos]);
      Tensor& db = grads.touch(L.cat_b[pos]);
      const auto& acts = tr.item_activation[i];
      const double inv = 1.0 / static_cast<double>(acts.size());
      for (std::size_t k = 0; k < acts.size(); ++k) {
        Vec dpre(d);
        for (std::size_t j = 0; j < d; ++j)
          dpre[j] = dh[i][j] * inv * (1.0 - acts[k][j] * acts[k][j]);
        outer_add(dW, dpre, feats[i][k]);
        add_to(db.data(), dpre);
      }
    }
  }

  ModelConfig config_;
  ParamSet params_;
  std::array<Layout, 2> layouts_;
  KeySelector key_selector_ = smallest_id_keys;
};

}  // namespace compat
