#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "compat/error.hpp"
#include "compat/tensor.hpp"

namespace compat {

enum class OptimizerKind { adam, rmsprop };

inline std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "rmsprop";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ArgumentError("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;    // Adam first-moment decay
  double beta2 = 0.999;  // Adam second-moment decay
  double decay = 0.9;    // RMSProp running-average decay
  double epsilon = 1e-8;
};

// Moments are stored per parameter; RMSProp uses only `second`.
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first;
  std::vector<Tensor> second;

  static OptimizerState fresh(const ParamSet& params, OptimizerConfig config) {
    OptimizerState s;
    s.config = config;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (config.kind == OptimizerKind::adam) s.first.push_back(params.tensor(i).zeros_like());
      s.second.push_back(params.tensor(i).zeros_like());
    }
    return s;
  }
};

namespace detail {

inline void check_alignment(const ParamSet& params, const Gradients& grads,
                            const OptimizerState& state) {
  if (grads.size() != params.size())
    throw StructuralError("gradient count " + std::to_string(grads.size()) +
                          " does not match parameter count " + std::to_string(params.size()));
  if (state.second.size() != params.size() ||
      (state.config.kind == OptimizerKind::adam && state.first.size() != params.size()))
    throw StructuralError("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.touched(i) && !grads.slot(i).same_shape(params.tensor(i)))
      throw StructuralError("gradient shape mismatch for '" + params.name(i) + "'");
    if (!state.second[i].same_shape(params.tensor(i)))
      throw StructuralError("optimizer moment shape mismatch for '" + params.name(i) + "'");
  }
}

}  // namespace detail

// Adam with bias correction. Parameters whose gradient slot was never
// touched are skipped entirely (moments included), so a step only moves
// tensors that received a gradient.
inline void adam_step(ParamSet& params, const Gradients& grads, OptimizerState& state) {
  if (state.config.kind != OptimizerKind::adam)
    throw StructuralError("adam_step called with RMSProp state");
  detail::check_alignment(params, grads, state);
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads.touched(i)) continue;
    auto g = grads.slot(i).data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    auto theta = params.mutable_tensor(i).data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / correct1;
      const double vhat = v[k] / correct2;
      theta[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

// RMSProp without momentum; same skipping rule as adam_step.
inline void rmsprop_step(ParamSet& params, const Gradients& grads, OptimizerState& state) {
  if (state.config.kind != OptimizerKind::rmsprop)
    throw StructuralError("rmsprop_step called with Adam state");
  detail::check_alignment(params, grads, state);
  const auto& c = state.config;
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads.touched(i)) continue;
    auto g = grads.slot(i).data();
    auto v = state.second[i].data();
    auto theta = params.mutable_tensor(i).data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = c.decay * v[k] + (1.0 - c.decay) * g[k] * g[k];
      theta[k] -= c.learning_rate * g[k] / (std::sqrt(v[k]) + c.epsilon);
    }
  }
}

inline void optimizer_step(ParamSet& params, const Gradients& grads, OptimizerState& state) {
  if (state.config.kind == OptimizerKind::adam)
    adam_step(params, grads, state);
  else
    rmsprop_step(params, grads, state);
}

}  // namespace compat
