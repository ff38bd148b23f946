// SPDX-License-Identifier: Apache-2.0
#include "suitein/model/gradient_suite.hpp"

#include <functional>
#include <random>

#include "suitein/diffnet/gradcheck.hpp"
#include "suitein/diffnet/layers.hpp"
#include "suitein/diffnet/ops.hpp"
#include "suitein/model/model.hpp"

namespace suitein::model {

namespace dn = diffnet;

namespace {

Tensor random_tensor(dn::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(dn::numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

GradientCheckRow row_of(const std::string& name, const dn::GradCheckResult& r, double threshold) {
  GradientCheckRow row;
  row.component = name;
  row.max_relative_error = r.max_relative_error;
  row.threshold = threshold;
  row.elements = r.elements_checked;
  row.worst = r.worst_parameter + "[" + std::to_string(r.worst_index) + "]";
  return row;
}

// Restores the fault hook on every exit path.
struct FaultScope {
  explicit FaultScope(double f) { dn::testing::set_linear_gradient_fault(f); }
  ~FaultScope() { dn::testing::set_linear_gradient_fault(0.0); }
};

}  // namespace

std::vector<GradientCheckRow> run_gradient_suite(const GradientSuiteOptions& o) {
  FaultScope fault(o.inject_fault);
  std::vector<GradientCheckRow> rows;
  std::mt19937_64 rng(o.seed);
  const std::size_t B = 3, F = 4, T = 9;

  for (auto kind : {dn::LayerKind::linear, dn::LayerKind::conv1d_block, dn::LayerKind::batchnorm,
                    dn::LayerKind::maxpool, dn::LayerKind::dropout, dn::LayerKind::gru,
                    dn::LayerKind::multihead_attention}) {
    dn::ParameterSet params;
    std::function<Tensor()> loss;
    std::mt19937_64 mask_rng(o.seed + 1);
    dn::Linear fc;
    dn::Conv1dBlock block;
    dn::Gru gru;
    dn::MultiHeadAttention mha;
    dn::BatchNormState bn{Tensor({F}, 0.0), Tensor({F}, 1.0)};
    Tensor input;
    switch (kind) {
      case dn::LayerKind::linear:
        fc = dn::Linear(F, 3, true, rng);
        fc.register_parameters(params, "fc");
        input = random_tensor({B, F}, rng);
        loss = [&] { return dn::sum(dn::tanh(fc.forward(input))); };
        break;
      case dn::LayerKind::conv1d_block:
        block = dn::Conv1dBlock({.in_channels = F, .out_channels = 3, .kernel = 2, .dropout = 0.0}, rng);
        block.register_parameters(params, "conv");
        input = random_tensor({B, F, T}, rng);
        loss = [&] { return dn::sum(dn::tanh(block.forward(input, true, mask_rng))); };
        break;
      case dn::LayerKind::batchnorm:
        params.add("x", random_tensor({B, F, T}, rng, true));
        params.add("gamma", random_tensor({F}, rng, true));
        params.add("beta", random_tensor({F}, rng, true));
        input = random_tensor({B, F, T}, rng);
        loss = [&] {
          const auto y = dn::batch_norm(params.at("x"), params.at("gamma"), params.at("beta"), bn, true);
          return dn::sum(dn::mul(y, input));
        };
        break;
      case dn::LayerKind::maxpool:
        params.add("x", random_tensor({B, F, T + 3}, rng, true));
        loss = [&] { return dn::sum(dn::tanh(dn::adaptive_avg_pool1d(dn::max_pool1d(params.at("x"), 2), 2))); };
        break;
      case dn::LayerKind::dropout:
        params.add("x", random_tensor({B, F}, rng, true));
        loss = [&] {
          std::mt19937_64 fixed(o.seed + 11);
          return dn::sum(dn::tanh(dn::dropout(params.at("x"), 0.3, fixed, true)));
        };
        break;
      case dn::LayerKind::gru:
        gru = dn::Gru(F, 3, 2, rng);
        gru.register_parameters(params, "gru");
        input = random_tensor({B, T, F}, rng);
        loss = [&] {
          const auto h = gru.forward(input);
          return dn::sum(dn::mul(h, h));
        };
        break;
      case dn::LayerKind::multihead_attention:
        mha = dn::MultiHeadAttention(4, 2, rng);
        mha.register_parameters(params, "mha");
        input = random_tensor({B, 3, 4}, rng);
        loss = [&] { return dn::sum(dn::tanh(mha.forward(input))); };
        break;
    }
    rows.push_back(row_of(std::string(dn::to_string(kind)), dn::finite_diff_check(loss, params), o.layer_threshold));
  }

  // feature losses with the features themselves as parameters
  {
    dn::ParameterSet params;
    FeatureBundle bundle;
    for (std::size_t j = 0; j < 3; ++j) {
      bundle.glb.push_back(random_tensor({2, 3, 4}, rng, true));
      bundle.loc.push_back(random_tensor({2, 3, 4}, rng, true));
      params.add("glb" + std::to_string(j), bundle.glb.back());
      params.add("loc" + std::to_string(j), bundle.loc.back());
    }
    rows.push_back(row_of("contrastive_loss", dn::finite_diff_check([&] { return contrastive_loss(bundle, 0.1); }, params),
                          o.layer_threshold));
    rows.push_back(row_of("orthogonality_loss", dn::finite_diff_check([&] { return orthogonality_loss(bundle); }, params),
                          o.layer_threshold));
  }

  // full loss per variant on 2-sample batches
  ModelConfig cfg;
  cfg.channels = {4, 4, 6, 6, 8, 8};
  cfg.gru_hidden = 6;
  cfg.attention_dim = 8;
  cfg.attention_heads = 2;
  cfg.local_hidden = 6;
  cfg.dropout = 0.0;
  for (int variant = 1; variant <= 6; ++variant) {
    SuiteInModel m(cfg, AblationConfig::from_variant(variant), {}, o.seed * 31 + static_cast<std::uint64_t>(variant));
    std::vector<Tensor> x;
    for (std::size_t j = 0; j < cfg.devices; ++j) {
      auto t = random_tensor({2, cfg.input_channels, cfg.window}, rng);
      for (double& v : t.mutable_values()) v *= 2.0;
      x.push_back(t);
    }
    const Tensor y = random_tensor({2, 2}, rng);
    // the local target carries a stop-gradient; pin it at the unperturbed point
    Tensor target;
    {
      dn::NoGradGuard g;
      target = dn::sub(y, m.fuse(m.encode(x, true)).v_glb);
    }
    dn::GradCheckOptions opt;
    opt.max_elements_per_tensor = 24;
    opt.seed = o.seed + static_cast<std::uint64_t>(variant);
    // eps = 1e-6 central differences resolve gradients only down to ~1e-9
    opt.denominator_floor = 1e-6;
    const auto r = dn::finite_diff_check([&] { return m.forward_loss(x, y, true, &target).total; }, m.parameters(), opt);
    rows.push_back(row_of("loss." + AblationConfig::from_variant(variant).tag(), r, o.loss_threshold));
  }
  return rows;
}

}  // namespace suitein::model
