#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "compat/error.hpp"
#include "compat/tensor.hpp"

namespace compat {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;  // "name[flat_index]"
  double analytic = 0.0;        // values at the worst coordinate
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Central differences at h, h/2 and h/4 combined by Richardson extrapolation
// (truncation O(h^6)), over every scalar of `params`. Compared with the
// analytic gradient by |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult grad_check(const std::function<double(const ParamSet&)>& loss_fn,
                                  const std::function<ParamSet(const ParamSet&)>& analytic,
                                  ParamSet params, double h = 2e-2) {
  const ParamSet grads = analytic(params);
  if (!grads.same_layout(params))
    throw StructuralError("analytic gradient layout differs from the parameters");

  auto eval = [&](const ParamSet& p) {
    const double v = loss_fn(p);
    if (!std::isfinite(v)) throw NumericError("non-finite loss during gradient check");
    return v;
  };
  eval(params);

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params.tensor(i).size();
    for (std::size_t k = 0; k < n; ++k) {
      const double saved = params.tensor(i)[k];
      auto at = [&](double offset) {
        params.mutable_tensor(i)[k] = saved + offset;
        return eval(params);
      };
      double d[3];
      for (int l = 0; l < 3; ++l) {
        const double step = h / static_cast<double>(1 << l);
        d[l] = (at(step) - at(-step)) / (2.0 * step);
      }
      params.mutable_tensor(i)[k] = saved;

      const double e1 = (4.0 * d[1] - d[0]) / 3.0, e2 = (4.0 * d[2] - d[1]) / 3.0;
      const double num = (16.0 * e2 - e1) / 15.0;
      const double ana = grads.tensor(i)[k];
      const double rel =
          std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
      ++result.coordinates;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        result.max_relative_error = rel;
        result.worst_parameter = params.name(i) + "[" + std::to_string(k) + "]";
        result.analytic = ana;
        result.numeric = num;
      }
    }
  }
  return result;
}

}  // namespace compat
