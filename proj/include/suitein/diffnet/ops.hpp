// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Elementwise binary ops require identical
// shapes; broadcasting is explicit through expand().
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "suitein/diffnet/tensor.hpp"

namespace suitein::diffnet {

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// Reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums out `axis` (the axis is removed from the shape).
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

// Shape manipulation
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// Inserts a new axis of length `n` at `axis`, repeating the data.
Tensor expand(const Tensor& x, std::size_t axis, std::size_t n);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor stack(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// slice() of length one with the axis removed.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);

// Linear algebra
/// y = x Wᵀ + b over the trailing axis. x: [..., in], W: [out, in], b: [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Batched matrix product: [B, n, k] x [B, k, m] -> [B, n, m].
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x);  // over the last axis

// Sequence layers
/// Valid (unpadded) stride-1 convolution over the last axis.
/// x: [B, Cin, T], w: [Cout, Cin, K] -> [B, Cout, T - K + 1].
Tensor conv1d(const Tensor& x, const Tensor& weight);
/// Non-overlapping max pooling over the last axis; trailing remainder dropped.
Tensor max_pool1d(const Tensor& x, std::size_t width);
/// Averages the last axis into `segments` contiguous (possibly overlapping) bins,
/// bin s covering [floor(s*T/S), ceil((s+1)*T/S)).
Tensor adaptive_avg_pool1d(const Tensor& x, std::size_t segments);

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C], unbiased
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalisation of x: [B, C, T] (or [B, C]). In training mode the
/// batch statistics are used and the running statistics are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// Inverted dropout. Identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

// Losses and similarities
/// Norm floor of cosine_similarity.
inline constexpr double kCosineEps = 1e-8;
/// Row-wise cosine similarity of [B, n] tensors -> [B]:
/// a.b / (max(|a|, eps) max(|b|, eps)), so a zero row gives 0.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

namespace testing {
/// Scales the weight gradient of linear() by (1 + factor). Zero disables it.
/// Only for exercising the gradient checker's failure path.
void set_linear_gradient_fault(double factor);
}  // namespace testing

}  // namespace suitein::diffnet
