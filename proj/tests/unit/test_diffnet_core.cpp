// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "suitein/common/error.hpp"
#include "suitein/diffnet/adam.hpp"
#include "suitein/diffnet/checkpoint.hpp"
#include "suitein/diffnet/gradcheck.hpp"
#include "suitein/diffnet/layers.hpp"
#include "suitein/diffnet/ops.hpp"

namespace dn = suitein::diffnet;
using dn::Shape;
using dn::Tensor;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false) {
  auto v = oracle::random_vec(dn::numel(shape), rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

// ----------------------------------------------------------------- backward

TEST(Backward, SumGivesOnes) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  dn::sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, MseMatchesClosedForm) {
  std::mt19937_64 rng(1);
  Tensor p = random_tensor({4, 2}, rng, true);
  const Tensor y = random_tensor({4, 2}, rng);
  dn::mse_loss(p, y).backward();
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(p.grad()[i], 2.0 * (p.values()[i] - y.values()[i]) / 8.0, 1e-15);
  }
}

TEST(Backward, NonScalarRootThrows) {
  Tensor x({3}, 1.0, true);
  EXPECT_THROW(dn::scale(x, 2.0).backward(), suitein::ShapeError);
}

TEST(Backward, SharedInputAccumulates) {
  Tensor x = Tensor::scalar(3.0, true);
  dn::mul(x, x).backward();  // d(x^2)/dx = 6
  EXPECT_NEAR(x.grad()[0], 6.0, 1e-15);
}

TEST(Backward, NoGradGuardDetachesGraph) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    dn::NoGradGuard guard;
    y = dn::mul(x, x);
  }
  EXPECT_FALSE(y.requires_grad());
}

// --------------------------------------------------------------------- Adam

TEST(Adam, ScalarQuadraticTenStepTrace) {
  // Reference trace computed by hand-rolled Adam on f(x) = x^2, x0 = 1, lr = 0.1.
  dn::ParameterSet params;
  params.add("x", Tensor::scalar(1.0, true));
  dn::Adam adam(params, {.learning_rate = 0.1});
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    params.zero_grad();
    Tensor& p = params.at("x");
    dn::mul(p, p).backward();
    adam.step();
    const double g = 2.0 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.item(), x, 1e-12) << "step " << t;
  }
  // First step moves by exactly lr in the direction of -sign(g).
  EXPECT_LT(params.at("x").item(), 1.0 - 0.9);
}

TEST(Adam, QuadraticLossDecreasesMonotonically) {
  std::mt19937_64 rng(2);
  dn::ParameterSet params;
  params.add("w", random_tensor({5}, rng, true));
  const Tensor target = random_tensor({5}, rng);
  dn::Adam adam(params, {.learning_rate = 0.01});
  double previous = 1e300;
  for (int i = 0; i < 50; ++i) {
    params.zero_grad();
    Tensor loss = dn::mse_loss(params.at("w"), target);
    EXPECT_LT(loss.item(), previous);
    previous = loss.item();
    loss.backward();
    adam.step();
  }
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  dn::ParameterSet params;
  params.add("w", Tensor({3}, {1.0, -2.0, 0.5}, true));
  params.at("w").mutable_grad();  // allocate an all-zero gradient
  dn::Adam adam(params, {});
  adam.step();
  EXPECT_EQ(params.at("w").values()[0], 1.0);
  EXPECT_EQ(params.at("w").values()[1], -2.0);
  EXPECT_EQ(params.at("w").values()[2], 0.5);
}

TEST(Adam, MissingGradientNamesParameter) {
  dn::ParameterSet params;
  params.add("encoder.weight", Tensor({2}, 1.0, true));
  dn::Adam adam(params, {});
  try {
    adam.step();
    FAIL();
  } catch (const suitein::Error& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.weight"), std::string::npos);
  }
}

// ---------------------------------------------------------------- gradcheck

TEST(GradCheck, LinearLayer) {
  std::mt19937_64 rng(3);
  dn::Linear fc(4, 3, true, rng);
  dn::ParameterSet params;
  fc.register_parameters(params, "fc");
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor y = random_tensor({5, 3}, rng);
  const auto r = dn::finite_diff_check([&] { return dn::mse_loss(fc.forward(x), y); }, params);
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst_parameter;
  EXPECT_EQ(r.elements_checked, 15u);
}

TEST(GradCheck, ConvBlock) {
  std::mt19937_64 rng(4);
  dn::Conv1dBlock block({.in_channels = 3, .out_channels = 4, .kernel = 3, .dropout = 0.0}, rng);
  dn::ParameterSet params;
  block.register_parameters(params, "b");
  const Tensor x = random_tensor({3, 3, 12}, rng);
  const Tensor y = random_tensor({3, 4, 5}, rng);
  std::mt19937_64 drop(0);
  // Training-mode batch norm keeps running stats moving but the output only
  // depends on the batch statistics.
  const auto r = dn::finite_diff_check(
      [&] { return dn::mse_loss(block.forward(x, true, drop), y); }, params);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter << "[" << r.worst_index << "]";
}

TEST(GradCheck, EveryLayerKindOnRandomShapes) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dim(2, 5);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t B = dim(rng), F = dim(rng), T = dim(rng) + 4;
    for (auto kind : {dn::LayerKind::conv1d_block, dn::LayerKind::linear, dn::LayerKind::gru,
                      dn::LayerKind::multihead_attention, dn::LayerKind::batchnorm,
                      dn::LayerKind::dropout, dn::LayerKind::maxpool}) {
      dn::ParameterSet params;
      std::function<Tensor()> loss;
      std::mt19937_64 mask_rng(trial);
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
          block = dn::Conv1dBlock({.in_channels = F, .out_channels = 3, .kernel = 2,
                                   .dropout = 0.0},
                                  rng);
          block.register_parameters(params, "conv");
          input = random_tensor({B, F, T}, rng);
          loss = [&] { return dn::sum(dn::tanh(block.forward(input, true, mask_rng))); };
          break;
        case dn::LayerKind::gru:
          gru = dn::Gru(F, 3, 2, rng);
          gru.register_parameters(params, "gru");
          input = random_tensor({B, T, F}, rng);
          loss = [&] { return dn::sum(dn::mul(gru.forward(input), gru.forward(input))); };
          break;
        case dn::LayerKind::multihead_attention:
          mha = dn::MultiHeadAttention(4, 2, rng);
          mha.register_parameters(params, "mha");
          input = random_tensor({B, 3, 4}, rng);
          loss = [&] { return dn::sum(dn::tanh(mha.forward(input))); };
          break;
        case dn::LayerKind::batchnorm:
          params.add("x", random_tensor({B, F, T}, rng, true));
          params.add("gamma", random_tensor({F}, rng, true));
          params.add("beta", random_tensor({F}, rng, true));
          input = random_tensor({B, F, T}, rng);
          loss = [&] {
            auto y = dn::batch_norm(params.at("x"), params.at("gamma"), params.at("beta"), bn, true);
            return dn::sum(dn::mul(y, input));
          };
          break;
        case dn::LayerKind::dropout:
          params.add("x", random_tensor({B, F}, rng, true));
          loss = [&] {
            std::mt19937_64 fixed(11);
            return dn::sum(dn::tanh(dn::dropout(params.at("x"), 0.3, fixed, true)));
          };
          break;
        case dn::LayerKind::maxpool:
          params.add("x", random_tensor({B, F, T}, rng, true));
          loss = [&] {
            return dn::sum(dn::tanh(dn::adaptive_avg_pool1d(dn::max_pool1d(params.at("x"), 2), 2)));
          };
          break;
      }
      const auto r = dn::finite_diff_check(loss, params);
      EXPECT_LT(r.max_relative_error, 1e-4)
          << dn::to_string(kind) << " worst " << r.worst_parameter << "[" << r.worst_index
          << "] analytic " << r.analytic << " numeric " << r.numeric;
    }
  }
}

TEST(GradCheck, InjectedFaultIsDetected) {
  std::mt19937_64 rng(6);
  dn::Linear fc(3, 2, true, rng);
  dn::ParameterSet params;
  fc.register_parameters(params, "fc");
  const Tensor x = random_tensor({4, 3}, rng);
  dn::testing::set_linear_gradient_fault(0.01);
  const auto r = dn::finite_diff_check([&] { return dn::sum(fc.forward(x)); }, params);
  dn::testing::set_linear_gradient_fault(0.0);
  EXPECT_GT(r.max_relative_error, 1e-3);
  EXPECT_EQ(r.worst_parameter, "fc.weight");
}

// -------------------------------------------------------- ops shape errors

TEST(Ops, PermuteAndSelectRoundTrip) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor p = dn::permute(x, {2, 0, 1});
  EXPECT_EQ(p.shape(), (Shape{4, 2, 3}));
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_EQ(p.values()[(c * 2 + a) * 3 + b], x.values()[(a * 3 + b) * 4 + c]);
  const Tensor s = dn::select(x, 1, 2);
  EXPECT_EQ(s.shape(), (Shape{2, 4}));
  EXPECT_EQ(s.values()[5], x.values()[(1 * 3 + 2) * 4 + 1]);
}

TEST(Ops, AdaptivePoolBins) {
  const Tensor x({1, 1, 8}, {0, 1, 2, 3, 4, 5, 6, 7});
  const Tensor y = dn::adaptive_avg_pool1d(x, 4);
  EXPECT_EQ(y.values()[0], 0.5);
  EXPECT_EQ(y.values()[3], 6.5);
  const Tensor z = dn::adaptive_avg_pool1d(Tensor({1, 1, 5}, {0, 1, 2, 3, 4}), 2);
  EXPECT_DOUBLE_EQ(z.values()[0], 1.0);  // [0,3)
  EXPECT_DOUBLE_EQ(z.values()[1], 3.0);  // [2,5)
}

TEST(Ops, MismatchedShapesThrow) {
  EXPECT_THROW(dn::add(Tensor({2}, 0.0), Tensor({3}, 0.0)), suitein::ShapeError);
  EXPECT_THROW(dn::reshape(Tensor({6}, 0.0), {4, 2}), suitein::ShapeError);
}

TEST(Ops, CosineOfZeroRowIsZeroWithFiniteGradient) {
  const Tensor a({1, 2}, 0.0, true), b({1, 2}, {3.0, 4.0}, true);
  const Tensor c = dn::cosine_similarity(a, b);
  EXPECT_EQ(c.item(), 0.0);
  dn::sum(c).backward();
  // |a| is clamped, so da = b / (eps |b|) and db = 0
  EXPECT_NEAR(a.grad()[0], 0.6 / dn::kCosineEps, 1e-6 / dn::kCosineEps);
  EXPECT_EQ(b.grad()[0], 0.0);
}

// --------------------------------------------------------------- checkpoint

namespace {

dn::Checkpoint sample_checkpoint() {
  std::mt19937_64 rng(8);
  dn::Checkpoint c;
  c.metadata = "{\"variant\":6}";
  c.config_digest = "abcdef0123456789";
  c.config_text = "seed: 1\n";
  c.parameters.add("a.weight", random_tensor({3, 2}, rng, true));
  c.parameters.add("a.running", random_tensor({4}, rng, false));
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto c = sample_checkpoint();
  const auto bytes = dn::encode_checkpoint(c);
  const auto back = dn::decode_checkpoint(bytes);
  EXPECT_EQ(dn::encode_checkpoint(back), bytes);
  EXPECT_EQ(back.metadata, c.metadata);
  EXPECT_TRUE(back.parameters.at("a.weight").requires_grad());
  EXPECT_FALSE(back.parameters.at("a.running").requires_grad());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.parameters.at("a.weight").values()[i], c.parameters.at("a.weight").values()[i]);
  }
}

TEST(Checkpoint, TruncationIsReported) {
  auto bytes = dn::encode_checkpoint(sample_checkpoint());
  for (std::size_t keep : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(keep));
    EXPECT_THROW(dn::decode_checkpoint(cut), suitein::CheckpointError) << keep;
  }
}

TEST(Checkpoint, CorruptionIsReported) {
  auto bytes = dn::encode_checkpoint(sample_checkpoint());
  bytes[bytes.size() / 2] ^= 0x10;
  try {
    dn::decode_checkpoint(bytes);
    FAIL();
  } catch (const suitein::CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Checkpoint, SchemaMismatchNamesBothVersions) {
  auto bytes = dn::encode_checkpoint(sample_checkpoint());
  bytes[8] = 7;
  try {
    dn::decode_checkpoint(bytes);
    FAIL();
  } catch (const suitein::CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("7"), std::string::npos);
    EXPECT_NE(msg.find("1"), std::string::npos);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "suitein_ckpt_test.bin";
  dn::write_checkpoint(path, sample_checkpoint());
  const auto back = dn::read_checkpoint(path);
  EXPECT_EQ(back.config_digest, "abcdef0123456789");
  std::filesystem::remove(path);
  EXPECT_THROW(dn::read_checkpoint(path), suitein::CheckpointError);
}

TEST(Parameters, AssignFromRejectsShapeMismatch) {
  dn::ParameterSet a, b;
  a.add("w", Tensor({2}, 0.0));
  b.add("w", Tensor({3}, 0.0));
  EXPECT_THROW(a.assign_from(b), suitein::CheckpointError);
  EXPECT_THROW(a.add("w", Tensor({1}, 0.0)), suitein::Error);
}
