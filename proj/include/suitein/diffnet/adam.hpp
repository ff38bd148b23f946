// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "suitein/diffnet/parameters.hpp"

namespace suitein::diffnet {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of a ParameterSet.
/// Moment buffers persist across step() calls.
class Adam {
 public:
  Adam(ParameterSet& params, AdamOptions options);

  /// One update. Every trainable parameter must hold a gradient.
  void step();
  std::int64_t step_count() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  ParameterSet& params_;
  AdamOptions options_;
  std::map<std::string, Moments> moments_;
  std::int64_t steps_ = 0;
};

}  // namespace suitein::diffnet
