// SPDX-License-Identifier: Apache-2.0
//
// Parameterised building blocks. Every layer owns its tensors and can
// register them into a ParameterSet under a hierarchical prefix.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "suitein/diffnet/ops.hpp"
#include "suitein/diffnet/parameters.hpp"

namespace suitein::diffnet {

enum class LayerKind { conv1d_block, linear, gru, multihead_attention, batchnorm, dropout, maxpool };

std::string_view to_string(LayerKind kind);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialised leaf with requires_grad.
Tensor uniform_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, bool with_bias, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void register_parameters(ParameterSet& params, const std::string& prefix) const;

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor weight;  // [out, in]
  Tensor bias;    // [out], may be undefined
};

struct Conv1dBlockSpec {
  std::size_t in_channels = 6;
  std::size_t out_channels = 32;
  std::size_t kernel = 3;
  std::size_t pool_width = 2;  // 1 disables pooling
  double dropout = 0.2;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  /// Output length for an input of `time` samples, 0 if the block cannot run.
  std::size_t output_length(std::size_t time) const;
};

/// conv1d (no bias) -> batch norm -> ReLU -> dropout (training only) -> max pool.
class Conv1dBlock {
 public:
  Conv1dBlock() = default;
  Conv1dBlock(const Conv1dBlockSpec& spec, std::mt19937_64& rng);

  /// x: [batch, in_channels, time] -> [batch, out_channels, time'].
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng);
  void register_parameters(ParameterSet& params, const std::string& prefix) const;
  const Conv1dBlockSpec& spec() const { return spec_; }

  Tensor weight;  // [out, in, kernel]
  Tensor gamma;   // [out]
  Tensor beta;    // [out]
  BatchNormState norm;

 private:
  Conv1dBlockSpec spec_;
};

/// Stacked GRU with the usual reset/update/candidate gates:
///   r = σ(W_ir x + b_ir + W_hr h + b_hr)
///   z = σ(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
///   h' = (1 - z) ⊙ n + z ⊙ h
/// Gate blocks are stacked [r; z; n] along the first weight axis.
class Gru {
 public:
  struct Layer {
    Tensor w_ih;  // [3H, in]
    Tensor w_hh;  // [3H, H]
    Tensor b_ih;  // [3H]
    Tensor b_hh;  // [3H]
  };

  Gru() = default;
  Gru(std::size_t input_size, std::size_t hidden_size, std::size_t layers, std::mt19937_64& rng);

  /// x: [batch, time, input] -> final hidden state of the top layer [batch, hidden].
  Tensor forward(const Tensor& x) const;
  void register_parameters(ParameterSet& params, const std::string& prefix) const;
  std::size_t hidden_size() const { return hidden_; }

  std::vector<Layer> layers;

 private:
  std::size_t hidden_ = 0;
};

/// Scaled dot-product self-attention over the second axis with `heads` heads
/// and no positional encoding. The key projection carries no bias.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t model_dim, std::size_t heads, std::mt19937_64& rng);

  /// x: [batch, tokens, d] -> [batch, tokens, d].
  Tensor forward(const Tensor& x) const;
  /// Same, also returning the attention weights [batch * heads, tokens, tokens].
  Tensor forward(const Tensor& x, Tensor* weights) const;
  void register_parameters(ParameterSet& params, const std::string& prefix) const;
  std::size_t heads() const { return heads_; }

  Linear query, key, value, output;

 private:
  std::size_t heads_ = 1;
};

}  // namespace suitein::diffnet
