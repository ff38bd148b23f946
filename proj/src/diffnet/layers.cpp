// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/layers.hpp"

#include <cmath>

#include "suitein/common/error.hpp"

namespace suitein::diffnet {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv1d_block: return "conv1d_block";
    case LayerKind::linear: return "linear";
    case LayerKind::gru: return "gru";
    case LayerKind::multihead_attention: return "multihead_attention";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::maxpool: return "maxpool";
  }
  return "unknown";
}

Tensor uniform_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

// --------------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features, bool with_bias,
               std::mt19937_64& rng)
    : weight(uniform_parameter({out_features, in_features}, in_features, rng)) {
  if (with_bias) bias = uniform_parameter({out_features}, in_features, rng);
}

void Linear::register_parameters(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  if (bias.defined()) params.add(prefix + ".bias", bias);
}

// ---------------------------------------------------------------- Conv1dBlock

void Conv1dBlockSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("conv block needs channels >= 1");
  if (kernel == 0) throw ConfigError("conv block kernel length must be >= 1");
  if (pool_width == 0) throw ConfigError("conv block pool width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1)");
  }
}

std::size_t Conv1dBlockSpec::output_length(std::size_t time) const {
  if (time < kernel) return 0;
  return (time - kernel + 1) / pool_width;
}

Conv1dBlock::Conv1dBlock(const Conv1dBlockSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  spec_.validate();
  weight = uniform_parameter({spec.out_channels, spec.in_channels, spec.kernel},
                             spec.in_channels * spec.kernel, rng);
  gamma = Tensor({spec.out_channels}, 1.0, true);
  beta = Tensor({spec.out_channels}, 0.0, true);
  norm.running_mean = Tensor({spec.out_channels}, 0.0);
  norm.running_var = Tensor({spec.out_channels}, 1.0);
  norm.momentum = spec.bn_momentum;
  norm.eps = spec.bn_eps;
}

Tensor Conv1dBlock::forward(const Tensor& x, bool training, std::mt19937_64& rng) {
  if (x.rank() != 3) {
    throw ShapeError("conv1d_block: expected [batch, channels, time], got " +
                     to_string(x.shape()));
  }
  if (x.dim(1) != spec_.in_channels) {
    throw ShapeError("conv1d_block: channels dimension is " + std::to_string(x.dim(1)) +
                     ", block expects " + std::to_string(spec_.in_channels));
  }
  if (x.dim(2) < spec_.kernel) {
    throw ShapeError("conv1d_block: time dimension " + std::to_string(x.dim(2)) +
                     " is shorter than kernel length " + std::to_string(spec_.kernel));
  }
  Tensor y = conv1d(x, weight);
  y = batch_norm(y, gamma, beta, norm, training);
  y = relu(y);
  y = dropout(y, spec_.dropout, rng, training);
  if (spec_.pool_width > 1) y = max_pool1d(y, spec_.pool_width);
  return y;
}

void Conv1dBlock::register_parameters(ParameterSet& params, const std::string& prefix) const {
  params.add(prefix + ".conv.weight", weight);
  params.add(prefix + ".bn.gamma", gamma);
  params.add(prefix + ".bn.beta", beta);
  params.add(prefix + ".bn.running_mean", norm.running_mean);
  params.add(prefix + ".bn.running_var", norm.running_var);
}

// ------------------------------------------------------------------------ GRU

Gru::Gru(std::size_t input_size, std::size_t hidden_size, std::size_t layer_count,
         std::mt19937_64& rng)
    : hidden_(hidden_size) {
  if (layer_count == 0 || hidden_size == 0) throw ConfigError("GRU needs layers and hidden >= 1");
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::size_t in = l == 0 ? input_size : hidden_size;
    Layer layer;
    layer.w_ih = uniform_parameter({3 * hidden_size, in}, in, rng);
    layer.w_hh = uniform_parameter({3 * hidden_size, hidden_size}, hidden_size, rng);
    layer.b_ih = Tensor({3 * hidden_size}, 0.0, true);
    layer.b_hh = Tensor({3 * hidden_size}, 0.0, true);
    layers.push_back(std::move(layer));
  }
}

Tensor Gru::forward(const Tensor& x) const {
  if (x.rank() != 3) {
    throw ShapeError("gru: expected [batch, time, features], got " + to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), steps = x.dim(1);
  if (steps == 0) throw ShapeError("gru: empty time axis");
  const std::size_t H = hidden_;
  Tensor sequence = x;
  Tensor h;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    const Tensor input_gates = linear(sequence, layer.w_ih, layer.b_ih);  // [B, T, 3H]
    h = Tensor({batch, H}, 0.0);
    std::vector<Tensor> outputs;
    outputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor gx = select(input_gates, 1, t);
      const Tensor gh = linear(h, layer.w_hh, layer.b_hh);
      const Tensor r = sigmoid(add(slice(gx, 1, 0, H), slice(gh, 1, 0, H)));
      const Tensor z = sigmoid(add(slice(gx, 1, H, H), slice(gh, 1, H, H)));
      const Tensor n = tanh(add(slice(gx, 1, 2 * H, H), mul(r, slice(gh, 1, 2 * H, H))));
      h = add(n, mul(z, sub(h, n)));
      if (l + 1 < layers.size()) outputs.push_back(h);
    }
    if (l + 1 < layers.size()) sequence = stack(outputs, 1);
  }
  return h;
}

void Gru::register_parameters(ParameterSet& params, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    params.add(p + ".w_ih", layers[l].w_ih);
    params.add(p + ".w_hh", layers[l].w_hh);
    params.add(p + ".b_ih", layers[l].b_ih);
    params.add(p + ".b_hh", layers[l].b_hh);
  }
}

// ------------------------------------------------------------------ Attention

MultiHeadAttention::MultiHeadAttention(std::size_t model_dim, std::size_t heads,
                                       std::mt19937_64& rng)
    : heads_(heads) {
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("attention width " + std::to_string(model_dim) +
                      " is not divisible by head count " + std::to_string(heads));
  }
  query = Linear(model_dim, model_dim, true, rng);
  key = Linear(model_dim, model_dim, false, rng);
  value = Linear(model_dim, model_dim, true, rng);
  output = Linear(model_dim, model_dim, true, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x) const { return forward(x, nullptr); }

Tensor MultiHeadAttention::forward(const Tensor& x, Tensor* weights) const {
  if (x.rank() != 3) {
    throw ShapeError("multihead_attention: expected [batch, tokens, d], got " +
                     to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), tokens = x.dim(1), d = x.dim(2);
  if (d % heads_ != 0) {
    throw ShapeError("multihead_attention: width " + std::to_string(d) +
                     " is not divisible by " + std::to_string(heads_) + " heads");
  }
  if (d != query.in_features()) {
    throw ShapeError("multihead_attention: width " + std::to_string(d) + " does not match " +
                     std::to_string(query.in_features()));
  }
  const std::size_t dh = d / heads_;
  auto split = [&](const Tensor& t) {
    return reshape(permute(reshape(t, {batch, tokens, heads_, dh}), {0, 2, 1, 3}),
                   {batch * heads_, tokens, dh});
  };
  const Tensor q = split(query.forward(x));
  const Tensor k = split(key.forward(x));
  const Tensor v = split(value.forward(x));
  const Tensor scores =
      scale(bmm(q, permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor attn = softmax(scores);
  if (weights) *weights = attn;
  const Tensor context = bmm(attn, v);
  const Tensor merged =
      reshape(permute(reshape(context, {batch, heads_, tokens, dh}), {0, 2, 1, 3}),
              {batch, tokens, d});
  return output.forward(merged);
}

void MultiHeadAttention::register_parameters(ParameterSet& params,
                                             const std::string& prefix) const {
  query.register_parameters(params, prefix + ".query");
  key.register_parameters(params, prefix + ".key");
  value.register_parameters(params, prefix + ".value");
  output.register_parameters(params, prefix + ".output");
}

}  // namespace suitein::diffnet
