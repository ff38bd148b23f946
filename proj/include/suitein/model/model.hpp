// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "suitein/dataio/types.hpp"
#include "suitein/diffnet/layers.hpp"
#include "suitein/diffnet/parameters.hpp"

namespace suitein::model {

using diffnet::Tensor;

struct LossWeights {
  double lambda_v = 1.0;
  double lambda_v_glb = 0.1;
  double lambda_v_loc = 1.0;
  double lambda_con = 0.2;
  double lambda_orth = 0.05;
  double tau = 0.1;
  double lambda_a = 9.0;     // quality-weight span
  double lambda_b = 0.01;    // quality-score temperature
  double lambda_c_w = 10.0;  // quality-weight floor

  void validate() const;
};

/// Module switches. The six rows of the ablation table map to
///   1: -/-/-   2: -/GF/-   3: FE/-/LA   4: -/GF/LA   5: FE/GF/-   6: FE/GF/LA
struct AblationConfig {
  bool contrast_fe = true;
  bool weighted_gf = true;
  bool attentive_la = true;

  /// 1-6 for the tabulated combinations, 0 otherwise.
  int variant() const;
  static AblationConfig from_variant(int variant);
  /// e.g. "v6[fe+gf+la]"
  std::string tag() const;
  bool operator==(const AblationConfig&) const = default;
};

struct ModelConfig {
  std::size_t devices = 3;
  std::size_t window = 100;
  std::size_t input_channels = 6;
  std::vector<std::size_t> channels{32, 64, 128, 128, 128, 128};
  std::vector<std::size_t> kernels{3, 2, 2, 2, 2, 2};
  /// Max pooling (width 2) follows the first `pooled_blocks` conv blocks.
  std::size_t pooled_blocks = 3;
  std::size_t segments = 4;  // T'' for the global branch
  std::size_t gru_hidden = 128;
  std::size_t gru_layers = 2;
  std::size_t attention_dim = 128;  // d_loc
  std::size_t attention_heads = 4;
  std::size_t local_hidden = 128;
  double dropout = 0.2;

  /// Throws ConfigError; the kernel schedule must be exactly [3,2,2,2,2,2].
  void validate() const;
  /// T' for the configured window (0 if the window is too short).
  std::size_t feature_length() const;
  std::size_t feature_channels() const { return channels.back(); }
};

/// Per-device features, each [batch, C, T'].
struct FeatureBundle {
  std::vector<Tensor> glb;
  std::vector<Tensor> loc;
};

struct FusionState {
  std::vector<Tensor> u_glb;  // per device [B, C, T'']
  Tensor e;                   // [B, J]
  Tensor alpha_tilde;         // [B, J]
  Tensor alpha;               // [B, J]
  Tensor G;                   // [B, C, T'']
  Tensor r_glb;               // [B, H]
  Tensor D;                   // [B, J, d_loc]
  Tensor D_prime;             // [B, J, d_loc]
  Tensor r_loc;               // [B, h_loc]
  Tensor v_glb, v_loc, v;     // [B, 2]
};

struct LossBreakdown {
  Tensor total;
  double mse_v = 0.0;
  double mse_v_glb = 0.0;
  double mse_v_loc = 0.0;
  double contrastive = 0.0;
  double orthogonality = 0.0;
};

/// L_con over ordered device pairs, averaged over the batch. Features are
/// flattened over (C, T'). An all-zero feature has cosine 0 with everything.
Tensor contrastive_loss(const FeatureBundle& bundle, double tau);
/// Sum over ordered pairs of cos(loc_i, loc_j) plus sum_j cos(glb_j, loc_j),
/// averaged over the batch.
Tensor orthogonality_loss(const FeatureBundle& bundle);

/// alpha_tilde = lambda_a * sigmoid(e / lambda_b) + lambda_c_w, alpha = alpha_tilde / sum.
void quality_weights(const Tensor& e, const LossWeights& w, Tensor& alpha_tilde, Tensor& alpha);

/// J tensors [B, 6, L] built from windows (rows are time, columns channels).
std::vector<Tensor> batch_inputs(const std::vector<const dataio::DeviceWindow*>& windows);
/// [B, 2] velocity labels.
Tensor batch_targets(const std::vector<const dataio::DeviceWindow*>& windows);

class SuiteInModel {
 public:
  SuiteInModel(const ModelConfig& config, const AblationConfig& ablation, const LossWeights& weights,
               std::uint64_t seed);

  SuiteInModel(const SuiteInModel&) = delete;
  SuiteInModel& operator=(const SuiteInModel&) = delete;

  /// inputs: J tensors [B, input_channels, window].
  FeatureBundle encode(const std::vector<Tensor>& inputs, bool training);
  /// Fills u_glb ... r_glb and v_glb.
  void weighted_global_fusion(const FeatureBundle& bundle, FusionState& state) const;
  /// Fills D, D_prime, r_loc and v_loc.
  void attentive_local_analysis(const FeatureBundle& bundle, FusionState& state) const;
  /// v = FC(v_glb ++ v_loc).
  Tensor fuse_velocity(const Tensor& v_glb, const Tensor& v_loc) const;
  /// Runs the active branches.
  FusionState fuse(const FeatureBundle& bundle) const;
  /// The local target is y - v_glb with gradient stopped. Passing `local_target`
  /// pins it to a fixed tensor instead, which finite-difference checks need.
  LossBreakdown total_loss(const FusionState& state, const FeatureBundle& bundle, const Tensor& v_true,
                           const Tensor* local_target = nullptr) const;

  /// Convenience: encode + fuse + loss.
  LossBreakdown forward_loss(const std::vector<Tensor>& inputs, const Tensor& v_true, bool training,
                             const Tensor* local_target = nullptr);
  /// Velocity prediction [B, 2] in inference mode (no graph).
  Tensor predict(const std::vector<Tensor>& inputs);

  diffnet::ParameterSet& parameters() { return params_; }
  const diffnet::ParameterSet& parameters() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const AblationConfig& ablation() const { return ablation_; }
  const LossWeights& weights() const { return weights_; }
  std::mt19937_64& dropout_rng() { return dropout_rng_; }

  struct Encoder {
    std::vector<diffnet::Conv1dBlock> blocks;
    Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng);
  };

  // Layers are public so tests can set weights directly.
  std::vector<Encoder> glb_encoders;  // hybrid encoders when contrast_fe is off
  std::vector<Encoder> loc_encoders;  // empty when contrast_fe is off
  diffnet::Linear score;              // quality score e, shared across devices
  diffnet::Gru gru;
  diffnet::Linear head_glb;
  diffnet::Linear local_proj;         // shared w_loc, b_loc
  diffnet::MultiHeadAttention attention;
  diffnet::Linear local_fc;
  diffnet::Linear head_loc;
  diffnet::Linear head_fuse;

 private:
  ModelConfig config_;
  AblationConfig ablation_;
  LossWeights weights_;
  diffnet::ParameterSet params_;
  std::mt19937_64 dropout_rng_;
};

}  // namespace suitein::model
