// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "suitein/dataio/pipeline.hpp"
#include "suitein/model/model.hpp"
#include "suitein/trainer/config.hpp"

namespace suitein::trainer {

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;  // sequence indices
};

/// Sequence-level split. Sequences are grouped by mode, each group shuffled
/// with `seed`, and the groups dealt out in order so every split sees every
/// mode when the group is large enough. Throws DataError for < 3 sequences.
DatasetSplit split_dataset(const std::vector<dataio::WalkingMode>& sequence_modes,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

/// Every sequence under `config.data.dir`, ingested in directory-name order.
std::vector<dataio::IngestedSequence> load_dataset(const DataConfig& config);
dataio::IngestOptions ingest_options(const DataConfig& config);

/// Windows of the listed sequences, in sequence then time order.
std::vector<const dataio::DeviceWindow*> gather_windows(const std::vector<dataio::IngestedSequence>& sequences,
                                                        const std::vector<std::size_t>& indices);

struct LossRecord {
  double total = 0.0;
  double mse_v = 0.0;
  double mse_v_glb = 0.0;
  double mse_v_loc = 0.0;
  double contrastive = 0.0;
  double orthogonality = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // cumulative optimizer steps
  LossRecord train;
  LossRecord val;
  double wall_seconds = 0.0;  // kept out of the deterministic report
};

struct TrainReport {
  std::string variant;
  std::string config_digest;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t total_steps = 0;
  std::filesystem::path checkpoint_path;

  /// One JSON object per line: an epoch line for each epoch then a summary.
  /// Contains no wall-clock values, so equal runs give equal bytes.
  std::string to_jsonl() const;
  /// Epoch index and wall-clock seconds, one JSON object per line.
  std::string timing_jsonl() const;
};

/// Mean loss components over `windows` in inference mode.
LossRecord evaluate_loss(model::SuiteInModel& model, const std::vector<const dataio::DeviceWindow*>& windows,
                         std::size_t batch_size);

struct TrainOptions {
  /// Writes model.ckpt, report.jsonl and timing.jsonl here when non-empty.
  std::filesystem::path output_dir;
  /// Progress lines on stderr.
  bool verbose = false;
};

struct TrainResult {
  TrainReport report;
  std::unique_ptr<model::SuiteInModel> model;  // holds the best-epoch parameters
};

/// Fixed-budget training with best-by-validation retention. Throws
/// DivergenceError naming the first non-finite loss component.
TrainResult train(const TrainConfig& config, const std::vector<const dataio::DeviceWindow*>& train_windows,
                  const std::vector<const dataio::DeviceWindow*>& val_windows, const TrainOptions& options = {});

void save_checkpoint(const std::filesystem::path& path, const model::SuiteInModel& model,
                     const TrainConfig& config);

struct LoadedModel {
  TrainConfig config;
  std::unique_ptr<model::SuiteInModel> model;
};

/// Rebuilds the model from the embedded configuration. Throws CheckpointError
/// on corruption, version or parameter mismatch.
LoadedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace suitein::trainer
