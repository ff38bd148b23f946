// SPDX-License-Identifier: Apache-2.0
#include "suitein/model/model.hpp"

#include <cmath>

#include "suitein/common/error.hpp"
#include "suitein/diffnet/ops.hpp"

namespace suitein::model {

namespace dn = diffnet;

namespace {

constexpr std::size_t kPoolWidth = 2;

Tensor flatten(const Tensor& x) {
  const std::size_t b = x.dim(0);
  return dn::reshape(x, {b, x.numel() / b});
}

// Broadcast a [B] tensor to [B, C, T].
Tensor broadcast_rows(const Tensor& a, std::size_t c, std::size_t t) {
  return dn::expand(dn::expand(a, 1, c), 2, t);
}

}  // namespace

// ----------------------------------------------------------------- configs

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"lambda_v", lambda_v},     {"lambda_v_glb", lambda_v_glb}, {"lambda_v_loc", lambda_v_loc},
      {"lambda_con", lambda_con}, {"lambda_orth", lambda_orth},   {"tau", tau},
      {"lambda_a", lambda_a},     {"lambda_b", lambda_b},         {"lambda_c_w", lambda_c_w}};
  for (const auto& [name, v] : all) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("loss weight ") + name + " must be >= 0");
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(lambda_b > 0.0)) throw ConfigError("lambda_b must be > 0");
}

int AblationConfig::variant() const {
  for (int v = 1; v <= 6; ++v) {
    if (from_variant(v) == *this) return v;
  }
  return 0;
}

AblationConfig AblationConfig::from_variant(int variant) {
  switch (variant) {
    case 1: return {false, false, false};
    case 2: return {false, true, false};
    case 3: return {true, false, true};
    case 4: return {false, true, true};
    case 5: return {true, true, false};
    case 6: return {true, true, true};
    default: throw ConfigError("ablation variant must be 1..6, got " + std::to_string(variant));
  }
}

std::string AblationConfig::tag() const {
  std::string flags;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!flags.empty()) flags += '+';
    flags += name;
  };
  add(contrast_fe, "fe");
  add(weighted_gf, "gf");
  add(attentive_la, "la");
  if (flags.empty()) flags = "none";
  const int v = variant();
  return (v ? "v" + std::to_string(v) : std::string("custom")) + "[" + flags + "]";
}

void ModelConfig::validate() const {
  if (devices < 1) throw ConfigError("model.devices must be >= 1");
  if (input_channels < 1) throw ConfigError("model.input_channels must be >= 1");
  const std::vector<std::size_t> expected{3, 2, 2, 2, 2, 2};
  if (kernels != expected) throw ConfigError("encoder kernel lengths must be exactly [3,2,2,2,2,2]");
  if (channels.size() != kernels.size()) {
    throw ConfigError("model.channels needs " + std::to_string(kernels.size()) + " entries");
  }
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("model.channels entries must be >= 1");
  }
  if (pooled_blocks > kernels.size()) throw ConfigError("model.pooled_blocks exceeds the block count");
  if (segments < 1) throw ConfigError("model.segments must be >= 1");
  if (gru_hidden < 1 || gru_layers < 1) throw ConfigError("model.gru_hidden and gru_layers must be >= 1");
  if (attention_heads < 1 || attention_dim % attention_heads != 0) {
    throw ConfigError("model.attention_dim must be divisible by model.attention_heads");
  }
  if (local_hidden < 1) throw ConfigError("model.local_hidden must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must be in [0, 1)");
  if (feature_length() == 0) {
    throw ConfigError("window of " + std::to_string(window) + " samples is shorter than the encoder's receptive field");
  }
}

std::size_t ModelConfig::feature_length() const {
  std::size_t t = window;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    if (t < kernels[i]) return 0;
    t = t - kernels[i] + 1;
    if (i < pooled_blocks) t /= kPoolWidth;
    if (t == 0) return 0;
  }
  return t;
}

// ------------------------------------------------------------------- losses

Tensor contrastive_loss(const FeatureBundle& bundle, double tau) {
  const std::size_t J = bundle.glb.size();
  if (J < 2 || bundle.loc.size() != J) throw ShapeError("contrastive loss needs J >= 2 global and local features");
  if (!(tau > 0.0)) throw ConfigError("contrastive loss: tau must be > 0");
  std::vector<Tensor> g, l;
  for (std::size_t j = 0; j < J; ++j) {
    g.push_back(flatten(bundle.glb[j]));
    l.push_back(flatten(bundle.loc[j]));
  }
  const double inv_tau = 1.0 / tau;
  auto sim = [&](const Tensor& a, const Tensor& b) { return dn::exp(dn::scale(dn::cosine_similarity(a, b), inv_tau)); };

  Tensor negatives = sim(g[0], l[0]);
  for (std::size_t j = 1; j < J; ++j) negatives = dn::add(negatives, sim(g[j], l[j]));
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t j = i + 1; j < J; ++j) {
      // ordered pairs: (i,j) and (j,i) share the same similarity
      negatives = dn::add(negatives, dn::scale(sim(l[i], l[j]), 2.0));
    }
  }
  Tensor total;
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t j = i + 1; j < J; ++j) {
      const Tensor c = dn::scale(dn::cosine_similarity(g[i], g[j]), inv_tau);
      // -log(s / (s + N)) = log(s + N) - log s
      const Tensor term = dn::sub(dn::log(dn::add(dn::exp(c), negatives)), c);
      const Tensor both = dn::scale(term, 2.0);
      total = total.defined() ? dn::add(total, both) : both;
    }
  }
  return dn::mean(total);
}

Tensor orthogonality_loss(const FeatureBundle& bundle) {
  const std::size_t J = bundle.loc.size();
  if (J < 1 || bundle.glb.size() != J) throw ShapeError("orthogonality loss needs J >= 1 global and local features");
  std::vector<Tensor> g, l;
  for (std::size_t j = 0; j < J; ++j) {
    g.push_back(flatten(bundle.glb[j]));
    l.push_back(flatten(bundle.loc[j]));
  }
  Tensor total = dn::cosine_similarity(g[0], l[0]);
  for (std::size_t j = 1; j < J; ++j) total = dn::add(total, dn::cosine_similarity(g[j], l[j]));
  for (std::size_t i = 0; i < J; ++i) {
    for (std::size_t j = i + 1; j < J; ++j) {
      total = dn::add(total, dn::scale(dn::cosine_similarity(l[i], l[j]), 2.0));
    }
  }
  return dn::mean(total);
}

void quality_weights(const Tensor& e, const LossWeights& w, Tensor& alpha_tilde, Tensor& alpha) {
  if (e.rank() != 2) throw ShapeError("quality scores must be [batch, devices], got " + dn::to_string(e.shape()));
  alpha_tilde = dn::add_scalar(dn::scale(dn::sigmoid(dn::scale(e, 1.0 / w.lambda_b)), w.lambda_a), w.lambda_c_w);
  const Tensor total = dn::expand(dn::sum_axis(alpha_tilde, 1), 1, e.dim(1));
  alpha = dn::div(alpha_tilde, total);
}

std::vector<Tensor> batch_inputs(const std::vector<const dataio::DeviceWindow*>& windows) {
  if (windows.empty()) throw ShapeError("empty batch");
  const std::size_t B = windows.size();
  const std::size_t J = windows[0]->device_data.size();
  const std::size_t L = windows[0]->length;
  std::vector<Tensor> out;
  for (std::size_t j = 0; j < J; ++j) {
    std::vector<double> v(B * 6 * L);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& w = *windows[b];
      if (w.device_data.size() != J || w.length != L) {
        throw ShapeError("batch windows disagree on device count or window length");
      }
      const auto& block = w.device_data[j];
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < 6; ++c) v[(b * 6 + c) * L + t] = block[t * 6 + c];
    }
    out.emplace_back(dn::Shape{B, 6, L}, std::move(v));
  }
  return out;
}

Tensor batch_targets(const std::vector<const dataio::DeviceWindow*>& windows) {
  std::vector<double> v;
  v.reserve(windows.size() * 2);
  for (const auto* w : windows) {
    v.push_back(w->v_label[0]);
    v.push_back(w->v_label[1]);
  }
  return Tensor({windows.size(), 2}, std::move(v));
}

// -------------------------------------------------------------------- model

Tensor SuiteInModel::Encoder::forward(const Tensor& x, bool training, std::mt19937_64& rng) {
  Tensor h = x;
  for (auto& b : blocks) h = b.forward(h, training, rng);
  return h;
}

SuiteInModel::SuiteInModel(const ModelConfig& config, const AblationConfig& ablation,
                           const LossWeights& weights, std::uint64_t seed)
    : config_(config), ablation_(ablation), weights_(weights), dropout_rng_(seed ^ 0xD1B54A32D192ED03ULL) {
  config_.validate();
  weights_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t J = config_.devices;
  const std::size_t C = config_.feature_channels();
  const std::size_t T = config_.feature_length();

  auto make_encoder = [&]() {
    Encoder e;
    std::size_t in = config_.input_channels;
    for (std::size_t i = 0; i < config_.kernels.size(); ++i) {
      dn::Conv1dBlockSpec spec;
      spec.in_channels = in;
      spec.out_channels = config_.channels[i];
      spec.kernel = config_.kernels[i];
      spec.pool_width = i < config_.pooled_blocks ? kPoolWidth : 1;
      spec.dropout = config_.dropout;
      e.blocks.emplace_back(spec, rng);
      in = config_.channels[i];
    }
    return e;
  };
  auto register_encoder = [&](const Encoder& e, const std::string& prefix) {
    for (std::size_t i = 0; i < e.blocks.size(); ++i) {
      e.blocks[i].register_parameters(params_, prefix + ".block" + std::to_string(i));
    }
  };

  const std::string glb_name = ablation_.contrast_fe ? "encoder.glb" : "encoder.hyb";
  for (std::size_t j = 0; j < J; ++j) {
    glb_encoders.push_back(make_encoder());
    register_encoder(glb_encoders.back(), glb_name + std::to_string(j));
  }
  if (ablation_.contrast_fe) {
    for (std::size_t j = 0; j < J; ++j) {
      loc_encoders.push_back(make_encoder());
      register_encoder(loc_encoders.back(), "encoder.loc" + std::to_string(j));
    }
  }

  const std::size_t S = config_.segments;
  if (ablation_.weighted_gf) {
    score = dn::Linear(C * S, 1, true, rng);
    score.register_parameters(params_, "fusion.score");
    gru = dn::Gru(C, config_.gru_hidden, config_.gru_layers, rng);
    gru.register_parameters(params_, "fusion.gru");
    head_glb = dn::Linear(config_.gru_hidden, 2, true, rng);
  } else {
    head_glb = dn::Linear(C * S, 2, true, rng);
  }
  head_glb.register_parameters(params_, "head.glb");

  if (ablation_.attentive_la) {
    local_proj = dn::Linear(C * T, config_.attention_dim, true, rng);
    local_proj.register_parameters(params_, "local.proj");
    attention = dn::MultiHeadAttention(config_.attention_dim, config_.attention_heads, rng);
    attention.register_parameters(params_, "local.attention");
    local_fc = dn::Linear(config_.attention_dim, config_.local_hidden, true, rng);
    local_fc.register_parameters(params_, "local.fc");
    head_loc = dn::Linear(config_.local_hidden, 2, true, rng);
    head_loc.register_parameters(params_, "head.loc");
    // [I | I], zero bias: v = v_glb + v_loc at initialisation
    head_fuse = dn::Linear(4, 2, true, rng);
    auto w = head_fuse.weight.mutable_values();
    std::fill(w.begin(), w.end(), 0.0);
    w[0 * 4 + 0] = w[0 * 4 + 2] = 1.0;
    w[1 * 4 + 1] = w[1 * 4 + 3] = 1.0;
    auto b = head_fuse.bias.mutable_values();
    std::fill(b.begin(), b.end(), 0.0);
    head_fuse.register_parameters(params_, "head.fuse");
  }
}

FeatureBundle SuiteInModel::encode(const std::vector<Tensor>& inputs, bool training) {
  const std::size_t J = config_.devices;
  if (inputs.size() != J) {
    throw ShapeError("model expects " + std::to_string(J) + " device inputs, got " + std::to_string(inputs.size()));
  }
  for (const auto& x : inputs) {
    if (x.rank() != 3 || x.dim(1) != config_.input_channels) {
      throw ShapeError("device input must be [batch, " + std::to_string(config_.input_channels) +
                       ", time], got " + dn::to_string(x.shape()));
    }
    if (x.dim(2) != config_.window) {
      throw ShapeError("device input time dimension is " + std::to_string(x.dim(2)) + ", model window is " +
                       std::to_string(config_.window));
    }
    if (x.dim(0) != inputs[0].dim(0)) throw ShapeError("device inputs disagree on the batch dimension");
  }
  FeatureBundle out;
  for (std::size_t j = 0; j < J; ++j) {
    out.glb.push_back(glb_encoders[j].forward(inputs[j], training, dropout_rng_));
    if (ablation_.contrast_fe) {
      out.loc.push_back(loc_encoders[j].forward(inputs[j], training, dropout_rng_));
    } else {
      out.loc.push_back(out.glb.back());
    }
  }
  return out;
}

void SuiteInModel::weighted_global_fusion(const FeatureBundle& bundle, FusionState& st) const {
  const std::size_t J = bundle.glb.size();
  if (J != config_.devices) throw ShapeError("feature bundle has the wrong device count");
  const std::size_t B = bundle.glb[0].dim(0);
  const std::size_t C = bundle.glb[0].dim(1);
  const std::size_t S = config_.segments;
  st.u_glb.clear();
  for (const auto& h : bundle.glb) st.u_glb.push_back(dn::adaptive_avg_pool1d(h, S));

  if (!ablation_.weighted_gf) {
    // fixed alpha = 1/J: plain mean of the pooled features
    st.e = Tensor({B, J}, 0.0);
    st.alpha_tilde = Tensor({B, J}, 1.0);
    st.alpha = Tensor({B, J}, 1.0 / static_cast<double>(J));
    Tensor g = st.u_glb[0];
    for (std::size_t j = 1; j < J; ++j) g = dn::add(g, st.u_glb[j]);
    st.G = dn::scale(g, 1.0 / static_cast<double>(J));
    st.r_glb = flatten(st.G);
    st.v_glb = head_glb.forward(st.r_glb);
    return;
  }

  const double inv_len = 1.0 / static_cast<double>(C * S);
  std::vector<Tensor> scores;
  for (const auto& u : st.u_glb) scores.push_back(dn::scale(score.forward(flatten(u)), inv_len));  // [B,1]
  st.e = dn::concat(scores, 1);
  quality_weights(st.e, weights_, st.alpha_tilde, st.alpha);
  Tensor g;
  for (std::size_t j = 0; j < J; ++j) {
    const Tensor a = broadcast_rows(dn::select(st.alpha, 1, j), C, S);
    const Tensor term = dn::mul(a, st.u_glb[j]);
    g = g.defined() ? dn::add(g, term) : term;
  }
  st.G = g;
  st.r_glb = gru.forward(dn::permute(st.G, {0, 2, 1}));  // sequence over the T'' segments
  st.v_glb = head_glb.forward(st.r_glb);
}

void SuiteInModel::attentive_local_analysis(const FeatureBundle& bundle, FusionState& st) const {
  const std::size_t J = bundle.loc.size();
  if (J != config_.devices) throw ShapeError("feature bundle has the wrong device count");
  const std::size_t C = bundle.loc[0].dim(1), T = bundle.loc[0].dim(2);
  const double inv_len = 1.0 / static_cast<double>(C * T);
  std::vector<Tensor> d;
  for (const auto& h : bundle.loc) d.push_back(dn::scale(local_proj.forward(flatten(h)), inv_len));
  st.D = dn::stack(d, 1);
  st.D_prime = attention.forward(st.D);
  st.r_loc = dn::relu(local_fc.forward(dn::mean_axis(st.D_prime, 1)));
  st.v_loc = head_loc.forward(st.r_loc);
}

Tensor SuiteInModel::fuse_velocity(const Tensor& v_glb, const Tensor& v_loc) const {
  if (v_glb.shape() != v_loc.shape()) throw ShapeError("fuse_velocity: v_glb and v_loc shapes differ");
  const Tensor both[2] = {v_glb, v_loc};
  return head_fuse.forward(dn::concat(both, 1));
}

FusionState SuiteInModel::fuse(const FeatureBundle& bundle) const {
  FusionState st;
  weighted_global_fusion(bundle, st);
  if (ablation_.attentive_la) {
    attentive_local_analysis(bundle, st);
    st.v = fuse_velocity(st.v_glb, st.v_loc);
  } else {
    st.v = st.v_glb;
  }
  return st;
}

LossBreakdown SuiteInModel::total_loss(const FusionState& st, const FeatureBundle& bundle, const Tensor& y,
                                      const Tensor* local_target) const {
  if (y.shape() != st.v.shape()) {
    throw ShapeError("targets " + dn::to_string(y.shape()) + " do not match predictions " + dn::to_string(st.v.shape()));
  }
  LossBreakdown out;
  const Tensor mse_v = dn::mse_loss(st.v, y);
  out.mse_v = mse_v.item();
  Tensor total = dn::scale(mse_v, weights_.lambda_v);
  if (ablation_.attentive_la) {
    const Tensor mse_glb = dn::mse_loss(st.v_glb, y);
    const Tensor residual = local_target ? local_target->detach() : dn::sub(y, st.v_glb).detach();
    const Tensor mse_loc = dn::mse_loss(st.v_loc, residual);
    out.mse_v_glb = mse_glb.item();
    out.mse_v_loc = mse_loc.item();
    total = dn::add(total, dn::scale(mse_glb, weights_.lambda_v_glb));
    total = dn::add(total, dn::scale(mse_loc, weights_.lambda_v_loc));
  }
  if (ablation_.contrast_fe) {
    const Tensor con = contrastive_loss(bundle, weights_.tau);
    const Tensor orth = orthogonality_loss(bundle);
    out.contrastive = con.item();
    out.orthogonality = orth.item();
    total = dn::add(total, dn::scale(con, weights_.lambda_con));
    total = dn::add(total, dn::scale(orth, weights_.lambda_orth));
  }
  out.total = total;
  return out;
}

LossBreakdown SuiteInModel::forward_loss(const std::vector<Tensor>& inputs, const Tensor& y, bool training,
                                        const Tensor* local_target) {
  const FeatureBundle bundle = encode(inputs, training);
  const FusionState st = fuse(bundle);
  return total_loss(st, bundle, y, local_target);
}

Tensor SuiteInModel::predict(const std::vector<Tensor>& inputs) {
  dn::NoGradGuard guard;
  const FeatureBundle bundle = encode(inputs, false);
  return fuse(bundle).v;
}

}  // namespace suitein::model
