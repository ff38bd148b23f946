// SPDX-License-Identifier: Apache-2.0
//
// Training configuration. Key names are listed in docs/formats.md; any key
// not listed there is rejected.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suitein/model/model.hpp"

namespace suitein::trainer {

struct DataConfig {
  /// Directory holding one sub-directory (with manifest.yaml) per sequence,
  /// or a single sequence directory.
  std::filesystem::path dir;
  double rate_hz = 25.0;
  std::size_t window = 100;
  std::size_t stride = 10;
  double max_gap_s = 0.5;
  bool align = true;
};

struct OptimConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  /// Optimizer step budget; 0 disables it.
  std::size_t max_steps = 0;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainConfig {
  static constexpr int kSchemaVersion = 1;

  std::uint64_t seed = 0;
  DataConfig data;
  OptimConfig train;
  model::ModelConfig model;
  model::LossWeights loss;
  model::AblationConfig ablation;
  std::filesystem::path output_dir = "runs/default";

  /// Throws ConfigError.
  void validate() const;
};

/// Parses YAML text. `overrides` are "dotted.key=value" strings applied before
/// validation; relative data/output paths resolve against `base_dir`.
TrainConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {},
                         const std::filesystem::path& base_dir = {});
TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical YAML: fixed key order, shortest round-trip numbers. Parsing it
/// back yields an equal configuration.
std::string to_yaml(const TrainConfig& config);
/// to_yaml without the output section. Where a run is written is not part of
/// the experiment, so digests and checkpoints use this form.
std::string experiment_yaml(TrainConfig config);
/// Short hex SHA-256 of experiment_yaml(config).
std::string config_digest(const TrainConfig& config);

/// Deterministic stream seed derived from a base seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

}  // namespace suitein::trainer
