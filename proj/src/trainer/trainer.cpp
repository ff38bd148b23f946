// SPDX-License-Identifier: Apache-2.0
#include "suitein/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "suitein/common/error.hpp"
#include "suitein/dataio/io.hpp"
#include "suitein/diffnet/adam.hpp"
#include "suitein/diffnet/checkpoint.hpp"

namespace suitein::trainer {

namespace fs = std::filesystem;
using model::SuiteInModel;

// --------------------------------------------------------------- splitting

DatasetSplit split_dataset(const std::vector<dataio::WalkingMode>& modes, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
  const std::size_t n = modes.size();
  if (n < 3) throw DataError("need at least 3 sequences to split, have " + std::to_string(n));
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be >= 0");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  // largest-remainder apportionment, then at least one sequence per used split
  std::array<std::size_t, 3> target{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    target[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[s] = exact - static_cast<double>(target[s]);
    assigned += target[s];
  }
  while (assigned < n) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (frac[s] > frac[best]) best = s;
    ++target[best];
    frac[best] = -1.0;
    ++assigned;
  }
  for (int s = 0; s < 3; ++s) {
    if (ratios[s] > 0.0 && target[s] == 0) {
      const auto donor = static_cast<int>(std::max_element(target.begin(), target.end()) - target.begin());
      --target[donor];
      ++target[s];
    }
  }

  std::map<dataio::WalkingMode, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[modes[i]].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, "split"));
  std::vector<std::size_t> order;
  for (auto& [mode, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    order.insert(order.end(), idx.begin(), idx.end());
  }

  // deal in proportion (Webster divisors) so each contiguous mode group is
  // spread across the splits
  DatasetSplit out;
  std::array<std::vector<std::size_t>*, 3> parts{&out.train, &out.val, &out.test};
  for (std::size_t i : order) {
    int pick = -1;
    double key = std::numeric_limits<double>::infinity();
    for (int s = 0; s < 3; ++s) {
      if (parts[s]->size() >= target[s]) continue;
      const double k = (static_cast<double>(parts[s]->size()) + 0.5) / static_cast<double>(target[s]);
      if (k < key) {
        key = k;
        pick = s;
      }
    }
    parts[pick]->push_back(i);
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return out;
}

// ------------------------------------------------------------------ data

dataio::IngestOptions ingest_options(const DataConfig& c) {
  dataio::IngestOptions o;
  o.rate_hz = c.rate_hz;
  o.window = c.window;
  o.stride = c.stride;
  o.max_gap = c.max_gap_s;
  o.align = c.align;
  return o;
}

std::vector<dataio::IngestedSequence> load_dataset(const DataConfig& config) {
  if (config.dir.empty()) throw DataError("data.dir is not set");
  if (!fs::is_directory(config.dir)) throw DataError("data directory '" + config.dir.string() + "' does not exist");
  std::vector<fs::path> manifests;
  if (fs::exists(config.dir / "manifest.yaml")) {
    manifests.push_back(config.dir / "manifest.yaml");
  } else {
    for (const auto& e : fs::directory_iterator(config.dir)) {
      if (e.is_directory() && fs::exists(e.path() / "manifest.yaml")) manifests.push_back(e.path() / "manifest.yaml");
    }
    std::sort(manifests.begin(), manifests.end());
  }
  if (manifests.empty()) throw DataError("no sequences (manifest.yaml) under '" + config.dir.string() + "'");
  const auto opts = ingest_options(config);
  std::vector<dataio::IngestedSequence> out;
  out.reserve(manifests.size());
  for (std::size_t i = 0; i < manifests.size(); ++i) out.push_back(dataio::ingest_sequence(manifests[i], opts, i));
  return out;
}

std::vector<const dataio::DeviceWindow*> gather_windows(const std::vector<dataio::IngestedSequence>& seqs,
                                                        const std::vector<std::size_t>& indices) {
  std::vector<const dataio::DeviceWindow*> out;
  for (std::size_t i : indices) {
    for (const auto& w : seqs.at(i).windows) out.push_back(&w);
  }
  return out;
}

// ------------------------------------------------------------------ report

namespace {

nlohmann::json to_json(const LossRecord& r) {
  return {{"total", r.total},         {"mse_v", r.mse_v},
          {"mse_v_glb", r.mse_v_glb}, {"mse_v_loc", r.mse_v_loc},
          {"contrastive", r.contrastive}, {"orthogonality", r.orthogonality}};
}

void accumulate(LossRecord& acc, const model::LossBreakdown& l, double w) {
  acc.total += w * l.total.item();
  acc.mse_v += w * l.mse_v;
  acc.mse_v_glb += w * l.mse_v_glb;
  acc.mse_v_loc += w * l.mse_v_loc;
  acc.contrastive += w * l.contrastive;
  acc.orthogonality += w * l.orthogonality;
}

void scale(LossRecord& r, double k) {
  for (double* v : {&r.total, &r.mse_v, &r.mse_v_glb, &r.mse_v_loc, &r.contrastive, &r.orthogonality}) *v *= k;
}

void check_finite(const model::LossBreakdown& l, const std::string& where) {
  const std::pair<const char*, double> parts[] = {{"mse_v", l.mse_v},
                                                  {"mse_v_glb", l.mse_v_glb},
                                                  {"mse_v_loc", l.mse_v_loc},
                                                  {"contrastive", l.contrastive},
                                                  {"orthogonality", l.orthogonality},
                                                  {"total", l.total.item()}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) {
      throw DivergenceError(name, std::string("non-finite ") + name + " loss (" + std::to_string(v) + ") " + where);
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string TrainReport::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::json j = {{"epoch", e.epoch},
                        {"steps", e.steps},
                        {"train", to_json(e.train)},
                        {"val", to_json(e.val)},
                        {"best", e.epoch == best_epoch}};
    out += j.dump() + "\n";
  }
  nlohmann::json s = {{"summary",
                       {{"variant", variant},
                        {"config_digest", config_digest},
                        {"epochs", epochs.size()},
                        {"total_steps", total_steps},
                        {"best_epoch", best_epoch},
                        {"best_val_loss", best_val_loss},
                        {"checkpoint", checkpoint_path.filename().string()}}}};
  return out + s.dump() + "\n";
}

std::string TrainReport::timing_jsonl() const {
  std::string out;
  for (const auto& e : epochs) out += nlohmann::json{{"epoch", e.epoch}, {"wall_seconds", e.wall_seconds}}.dump() + "\n";
  return out;
}

// ----------------------------------------------------------------- training

LossRecord evaluate_loss(SuiteInModel& m, const std::vector<const dataio::DeviceWindow*>& windows,
                         std::size_t batch_size) {
  diffnet::NoGradGuard guard;
  LossRecord acc;
  if (windows.empty()) return acc;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    const std::vector<const dataio::DeviceWindow*> batch(windows.begin() + static_cast<long>(start),
                                                         windows.begin() + static_cast<long>(end));
    const auto l = m.forward_loss(model::batch_inputs(batch), model::batch_targets(batch), false);
    accumulate(acc, l, static_cast<double>(batch.size()));
  }
  scale(acc, 1.0 / static_cast<double>(windows.size()));
  return acc;
}

TrainResult train(const TrainConfig& config, const std::vector<const dataio::DeviceWindow*>& train_windows,
                  const std::vector<const dataio::DeviceWindow*>& val_windows, const TrainOptions& options) {
  config.validate();
  if (train_windows.empty()) throw DataError("training split has no windows");
  if (val_windows.empty()) throw DataError("validation split has no windows");

  TrainResult result;
  result.model = std::make_unique<SuiteInModel>(config.model, config.ablation, config.loss,
                                                derive_seed(config.seed, "init"));
  SuiteInModel& m = *result.model;
  m.dropout_rng().seed(derive_seed(config.seed, "dropout"));
  diffnet::Adam adam(m.parameters(), {config.train.learning_rate, config.train.adam_beta1, config.train.adam_beta2,
                                      config.train.adam_eps});

  TrainReport& report = result.report;
  report.variant = config.ablation.tag();
  report.config_digest = config_digest(config);
  if (!options.output_dir.empty()) report.checkpoint_path = options.output_dir / "model.ckpt";

  const std::size_t B = config.train.batch_size;
  const std::size_t budget = config.train.max_steps;
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);
  diffnet::ParameterSet best = m.parameters().clone();
  report.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;

  for (std::size_t epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    if (budget && steps >= budget) break;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossRecord tr;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      if (budget && steps >= budget) break;
      std::vector<const dataio::DeviceWindow*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + B); ++k) batch.push_back(train_windows[order[k]]);
      m.parameters().zero_grad();
      const auto loss = m.forward_loss(model::batch_inputs(batch), model::batch_targets(batch), true);
      check_finite(loss, "at epoch " + std::to_string(epoch) + ", step " + std::to_string(steps + 1));
      loss.total.backward();
      for (const auto& [name, t] : m.parameters()) {
        if (!t.requires_grad() || !t.has_grad()) continue;
        for (double g : t.grad()) {
          if (!std::isfinite(g)) {
            throw DivergenceError("gradient", "non-finite gradient in '" + name + "' at step " +
                                                  std::to_string(steps + 1));
          }
        }
      }
      adam.step();
      ++steps;
      accumulate(tr, loss, static_cast<double>(batch.size()));
      seen += batch.size();
    }
    scale(tr, 1.0 / static_cast<double>(seen));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = steps;
    rec.train = tr;
    rec.val = evaluate_loss(m, val_windows, B);
    if (!std::isfinite(rec.val.total)) {
      throw DivergenceError("validation", "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (rec.val.total < report.best_val_loss) {
      report.best_val_loss = rec.val.total;
      report.best_epoch = epoch;
      best.assign_from(m.parameters());
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (options.verbose) {
      std::cerr << "epoch " << epoch << " steps " << steps << " train " << tr.total << " val " << rec.val.total
                << " (mse_v " << rec.val.mse_v << ")\n";
    }
  }
  report.total_steps = steps;
  m.parameters().assign_from(best);

  if (!options.output_dir.empty()) {
    fs::create_directories(options.output_dir);
    save_checkpoint(report.checkpoint_path, m, config);
    write_text(options.output_dir / "report.jsonl", report.to_jsonl());
    write_text(options.output_dir / "timing.jsonl", report.timing_jsonl());
  }
  return result;
}

// --------------------------------------------------------------- checkpoints

void save_checkpoint(const fs::path& path, const SuiteInModel& m, const TrainConfig& config) {
  diffnet::Checkpoint ckpt;
  ckpt.metadata = "suitein model " + m.ablation().tag();
  ckpt.config_text = experiment_yaml(config);
  ckpt.config_digest = config_digest(config);
  ckpt.parameters = m.parameters();
  diffnet::write_checkpoint(path, ckpt);
}

LoadedModel load_checkpoint(const fs::path& path) {
  const auto ckpt = diffnet::read_checkpoint(path);
  LoadedModel out;
  try {
    out.config = parse_config(ckpt.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint '" + path.string() + "' carries an invalid config: " + e.what());
  }
  if (config_digest(out.config) != ckpt.config_digest) {
    throw CheckpointError("checkpoint '" + path.string() + "' config digest " + ckpt.config_digest +
                          " does not match its config (" + config_digest(out.config) + ")");
  }
  out.model = std::make_unique<SuiteInModel>(out.config.model, out.config.ablation, out.config.loss, 0);
  out.model->parameters().assign_from(ckpt.parameters);
  return out;
}

}  // namespace suitein::trainer
