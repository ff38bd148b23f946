// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "suitein/diffnet/parameters.hpp"

namespace suitein::diffnet {

struct GradCheckOptions {
  double epsilon = 1e-6;
  /// Elements probed per tensor; 0 probes every element. Larger tensors are
  /// sampled with a generator seeded from `seed`.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Denominator floor. Gradients below it are compared in absolute terms,
  /// i.e. floor * tolerance acts as an absolute tolerance.
  double denominator_floor = 1e-8;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t elements_checked = 0;
};

/// Compares backward() gradients of the scalar `loss` with central differences
/// (f(θ+ε) - f(θ-ε)) / 2ε on every trainable entry of `params`. The relative
/// error of an element is |a - n| / max(|a|, |n|, denominator_floor). `loss` must be
/// deterministic; it is re-evaluated without graph recording for the probes.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, ParameterSet& params,
                                  const GradCheckOptions& options = {});

}  // namespace suitein::diffnet
