// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "suitein/common/error.hpp"

namespace suitein::diffnet {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw Error("gradient check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, ParameterSet& params,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigError("gradient check epsilon must be > 0");
  for (const auto& [name, t] : params) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) throw Error("gradient check: parameter '" + name + "' is not finite");
    }
  }

  params.zero_grad();
  {
    Tensor value = loss();
    if (!std::isfinite(value.item())) throw Error("gradient check: loss is not finite");
    value.backward();
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::ranges::copy(t.grad(), analytic.begin());

    std::vector<std::size_t> probe(t.numel());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.max_elements_per_tensor && probe.size() > options.max_elements_per_tensor) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_elements_per_tensor);
      std::sort(probe.begin(), probe.end());
    }

    auto values = t.mutable_values();
    for (std::size_t i : probe) {
      const double original = values[i];
      values[i] = original + options.epsilon;
      const double up = evaluate(loss);
      values[i] = original - options.epsilon;
      const double down = evaluate(loss);
      values[i] = original;

      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic[i];
      if (!std::isfinite(a)) throw Error("gradient check: gradient of '" + name + "' not finite");
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.elements_checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_parameter = name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace suitein::diffnet
