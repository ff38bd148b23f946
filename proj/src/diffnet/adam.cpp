// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/adam.hpp"

#include <cmath>

#include "suitein/common/error.hpp"

namespace suitein::diffnet {

Adam::Adam(ParameterSet& params, AdamOptions options) : params_(params), options_(options) {
  if (!(options_.learning_rate > 0.0)) throw ConfigError("Adam learning rate must be > 0");
  if (!(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
      !(options_.beta2 >= 0.0 && options_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(options_.eps > 0.0)) throw ConfigError("Adam eps must be > 0");
}

void Adam::step() {
  for (const auto& [name, t] : params_) {
    if (t.requires_grad() && !t.has_grad()) {
      throw Error("Adam step: parameter '" + name + "' has no gradient");
    }
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (auto& [name, t] : params_) {
    if (!t.requires_grad()) continue;
    Moments& m = moments_[name];
    if (m.first.empty()) {
      m.first.assign(t.numel(), 0.0);
      m.second.assign(t.numel(), 0.0);
    }
    auto values = t.mutable_values();
    auto grad = t.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g;
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g * g;
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      values[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

}  // namespace suitein::diffnet
