// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace suitein::model {

struct GradientCheckRow {
  std::string component;  // layer kind, loss term, or "loss.v<k>"
  double max_relative_error = 0.0;
  double threshold = 0.0;
  std::size_t elements = 0;
  std::string worst;  // parameter[index] of the worst element
  bool passed() const { return max_relative_error < threshold; }
};

struct GradientSuiteOptions {
  std::uint64_t seed = 0;
  double layer_threshold = 1e-4;
  double loss_threshold = 1e-3;
  /// Scales the Linear weight gradient by (1 + fault); test hook.
  double inject_fault = 0.0;
};

/// Central-difference checks of every layer kind, the two feature losses, and
/// the full training loss for each of the six ablation variants (2-sample
/// batches, small widths).
std::vector<GradientCheckRow> run_gradient_suite(const GradientSuiteOptions& options = {});

}  // namespace suitein::model
