// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "suitein/common/error.hpp"
#include "suitein/diffnet/checkpoint.hpp"
#include "suitein/synthgen/synthgen.hpp"
#include "suitein/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace suitein;
using trainer::TrainConfig;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.seed = 3;
  c.train.learning_rate = 1e-3;
  c.train.batch_size = 16;
  c.train.max_epochs = 2;
  c.train.max_steps = 0;
  c.model.channels = {4, 4, 6, 6, 8, 8};
  c.model.gru_hidden = 6;
  c.model.attention_dim = 8;
  c.model.attention_heads = 2;
  c.model.local_hidden = 6;
  return c;
}

const std::vector<dataio::IngestedSequence>& small_dataset() {
  static const auto data = [] {
    std::vector<dataio::IngestedSequence> out;
    const dataio::WalkingMode modes[] = {dataio::WalkingMode::STW, dataio::WalkingMode::PVW,
                                         dataio::WalkingMode::DLW, dataio::WalkingMode::MVW};
    for (std::size_t i = 0; i < 4; ++i) {
      const auto g = synthgen::generate(synthgen::preset(modes[i], 40 + i, 20.0), 60 + i, "s" + std::to_string(i));
      out.push_back(dataio::ingest_streams(g.manifest, g.devices, g.truth, {}, i));
    }
    return out;
  }();
  return data;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("suitein_trainer_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

// ------------------------------------------------------------------- config

TEST(TrainConfig, ParsesSectionsAndDefaults) {
  const auto c = trainer::parse_config(
      "seed: 11\n"
      "data: {dir: seqs, stride: 20}\n"
      "train: {learning_rate: 0.002, batch_size: 64, split: [0.6, 0.2, 0.2]}\n"
      "model: {channels: [8, 8, 16, 16, 16, 16]}\n"
      "ablation: {attentive_la: false}\n",
      {}, "/base");
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.data.dir, fs::path("/base/seqs"));
  EXPECT_EQ(c.data.stride, 20u);
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.002);
  EXPECT_EQ(c.model.channels[2], 16u);
  EXPECT_FALSE(c.ablation.attentive_la);
  EXPECT_EQ(c.ablation.variant(), 5);
  EXPECT_DOUBLE_EQ(c.loss.lambda_con, 0.2);
}

TEST(TrainConfig, UnknownKeysAreRejected) {
  try {
    trainer::parse_config("train: {learning_rat: 0.1}\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rat"), std::string::npos);
  }
  EXPECT_THROW(trainer::parse_config("bogus: 1\n"), ConfigError);
  EXPECT_THROW(trainer::parse_config("", {"model.nope=3"}), ConfigError);
  EXPECT_THROW(trainer::parse_config("", {"noequals"}), ConfigError);
  EXPECT_THROW(trainer::parse_config("train: {split: [0.5, 0.2, 0.2]}\n"), ConfigError);
  EXPECT_THROW(trainer::parse_config("train: {batch_size: 0}\n"), ConfigError);
  EXPECT_THROW(trainer::parse_config("schema_version: 9\n"), ConfigError);
}

TEST(TrainConfig, OverridesApplyBeforeValidation) {
  const auto c = trainer::parse_config("ablation: {contrast_fe: true}\n",
                                       {"ablation.contrast_fe=false", "loss.tau=0.5", "seed=4"});
  EXPECT_FALSE(c.ablation.contrast_fe);
  EXPECT_EQ(c.ablation.tag(), "v4[gf+la]");
  EXPECT_DOUBLE_EQ(c.loss.tau, 0.5);
  EXPECT_EQ(c.seed, 4u);
}

TEST(TrainConfig, CanonicalTextRoundTripsAndDigestTracksChanges) {
  auto c = tiny_config();
  c.data.dir = "/data/x";
  c.train.learning_rate = 3e-4;
  const std::string text = trainer::to_yaml(c);
  const auto back = trainer::parse_config(text);
  EXPECT_EQ(trainer::to_yaml(back), text);
  EXPECT_EQ(trainer::config_digest(back), trainer::config_digest(c));
  c.loss.lambda_orth = 0.06;
  EXPECT_NE(trainer::config_digest(back), trainer::config_digest(c));
}

TEST(DeriveSeed, SeparatesPurposes) {
  EXPECT_EQ(trainer::derive_seed(1, "a", 2), trainer::derive_seed(1, "a", 2));
  EXPECT_NE(trainer::derive_seed(1, "a", 2), trainer::derive_seed(1, "a", 3));
  EXPECT_NE(trainer::derive_seed(1, "a"), trainer::derive_seed(1, "b"));
}

// -------------------------------------------------------------------- split

TEST(SplitDataset, TenSequencesGoSixTwoTwo) {
  std::vector<dataio::WalkingMode> modes(10, dataio::WalkingMode::STW);
  const auto s = trainer::split_dataset(modes, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  const auto again = trainer::split_dataset(modes, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(s.train, again.train);
  EXPECT_EQ(s.val, again.val);
  EXPECT_EQ(s.test, again.test);

  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 10u);  // disjoint and complete
}

TEST(SplitDataset, EverySplitSeesEveryMode) {
  std::vector<dataio::WalkingMode> modes;
  for (int i = 0; i < 40; ++i) modes.push_back(dataio::kSimulatedModes[i % 5]);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = trainer::split_dataset(modes, {0.6, 0.2, 0.2}, seed);
    EXPECT_EQ(s.train.size(), 24u);
    EXPECT_EQ(s.val.size(), 8u);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      std::set<dataio::WalkingMode> seen;
      for (auto i : *part) seen.insert(modes[i]);
      EXPECT_EQ(seen.size(), 5u);
    }
  }
  EXPECT_NE(trainer::split_dataset(modes, {0.6, 0.2, 0.2}, 1).test,
            trainer::split_dataset(modes, {0.6, 0.2, 0.2}, 2).test);
}

TEST(SplitDataset, TooFewSequences) {
  EXPECT_THROW(trainer::split_dataset({dataio::WalkingMode::STW, dataio::WalkingMode::STW}, {0.6, 0.2, 0.2}, 0),
               DataError);
  const auto s = trainer::split_dataset(std::vector<dataio::WalkingMode>(3, dataio::WalkingMode::STW),
                                        {0.6, 0.2, 0.2}, 0);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 3u);
  EXPECT_GE(s.val.size(), 1u);
  EXPECT_GE(s.test.size(), 1u);
}

// ----------------------------------------------------------------- training

TEST(Train, OneEpochOnOneBatch) {
  const auto& data = small_dataset();
  auto tr = trainer::gather_windows(data, {0});
  tr.resize(8);
  const auto va = trainer::gather_windows(data, {1});
  auto c = tiny_config();
  c.train.max_epochs = 1;
  const auto r = trainer::train(c, tr, va);
  ASSERT_EQ(r.report.epochs.size(), 1u);
  EXPECT_EQ(r.report.epochs[0].steps, 1u);
  EXPECT_EQ(r.report.best_epoch, 1u);
  EXPECT_TRUE(std::isfinite(r.report.epochs[0].val.total));
}

TEST(Train, SameSeedIsBitIdenticalAndBestIsMinimal) {
  const auto& data = small_dataset();
  const auto tr = trainer::gather_windows(data, {0, 1});
  const auto va = trainer::gather_windows(data, {2});
  auto c = tiny_config();
  c.model.dropout = 0.2;
  c.train.max_epochs = 3;
  const auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
  const auto a = trainer::train(c, tr, va, {d1});
  const auto b = trainer::train(c, tr, va, {d2});
  EXPECT_EQ(slurp(d1 / "model.ckpt"), slurp(d2 / "model.ckpt"));
  EXPECT_EQ(slurp(d1 / "report.jsonl"), slurp(d2 / "report.jsonl"));
  EXPECT_EQ(diffnet::serialize(a.model->parameters()), diffnet::serialize(b.model->parameters()));
  for (const auto& e : a.report.epochs) EXPECT_LE(a.report.best_val_loss, e.val.total);

  // the retained parameters reproduce the best validation loss
  const auto again = trainer::evaluate_loss(*a.model, va, c.train.batch_size);
  EXPECT_DOUBLE_EQ(again.total, a.report.best_val_loss);

  c.seed = 4;
  const auto other = trainer::train(c, tr, va);
  EXPECT_NE(diffnet::serialize(a.model->parameters()), diffnet::serialize(other.model->parameters()));
}

TEST(Train, StepBudgetStopsMidEpoch) {
  const auto& data = small_dataset();
  const auto tr = trainer::gather_windows(data, {0, 1});
  const auto va = trainer::gather_windows(data, {2});
  auto c = tiny_config();
  c.train.max_epochs = 50;
  c.train.max_steps = 7;
  const auto r = trainer::train(c, tr, va);
  EXPECT_EQ(r.report.total_steps, 7u);
  EXPECT_EQ(r.report.epochs.back().steps, 7u);
}

TEST(Train, ReducedModelIsPlainRegression) {
  const auto& data = small_dataset();
  const auto tr = trainer::gather_windows(data, {0});
  const auto va = trainer::gather_windows(data, {1});
  auto full = tiny_config();
  full.ablation = model::AblationConfig::from_variant(1);
  auto reduced = full;
  reduced.loss.lambda_v_glb = reduced.loss.lambda_v_loc = reduced.loss.lambda_con = reduced.loss.lambda_orth = 0.0;
  const auto a = trainer::train(full, tr, va);
  const auto b = trainer::train(reduced, tr, va);
  ASSERT_EQ(a.report.epochs.size(), b.report.epochs.size());
  for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
    EXPECT_EQ(a.report.epochs[e].train.total, b.report.epochs[e].train.total);
    EXPECT_EQ(a.report.epochs[e].val.total, b.report.epochs[e].val.total);
    EXPECT_EQ(a.report.epochs[e].train.total, a.report.epochs[e].train.mse_v);
  }
}

TEST(Train, NonFiniteLossNamesComponent) {
  const auto& data = small_dataset();
  std::vector<dataio::DeviceWindow> bad(data[0].windows.begin(), data[0].windows.begin() + 4);
  bad[2].v_label[0] = std::nan("");
  std::vector<const dataio::DeviceWindow*> tr;
  for (const auto& w : bad) tr.push_back(&w);
  try {
    trainer::train(tiny_config(), tr, trainer::gather_windows(data, {1}));
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.component(), "mse_v");
    EXPECT_NE(std::string(e.what()).find("mse_v"), std::string::npos);
  }
}

TEST(Train, ReportIsLineDelimited) {
  const auto& data = small_dataset();
  const auto d = temp_dir("report");
  auto c = tiny_config();
  const auto r = trainer::train(c, trainer::gather_windows(data, {0}), trainer::gather_windows(data, {1}), {d});
  std::ifstream in(d / "report.jsonl");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), r.report.epochs.size() + 1);
  EXPECT_NE(lines.back().find("\"variant\":\"v6[fe+gf+la]\""), std::string::npos);
  EXPECT_EQ(slurp(d / "report.jsonl").find("wall"), std::string::npos);
  EXPECT_NE(slurp(d / "timing.jsonl").find("wall_seconds"), std::string::npos);
}

// -------------------------------------------------------------- checkpoints

TEST(Checkpoint, SaveLoadSaveIsByteIdenticalAndPredictsTheSame) {
  const auto& data = small_dataset();
  const auto d = temp_dir("ckpt");
  const auto c = tiny_config();
  model::SuiteInModel m(c.model, c.ablation, c.loss, 9);
  trainer::save_checkpoint(d / "a.ckpt", m, c);
  auto loaded = trainer::load_checkpoint(d / "a.ckpt");
  trainer::save_checkpoint(d / "b.ckpt", *loaded.model, loaded.config);
  EXPECT_EQ(slurp(d / "a.ckpt"), slurp(d / "b.ckpt"));
  EXPECT_EQ(trainer::to_yaml(loaded.config), trainer::to_yaml(c));

  std::vector<const dataio::DeviceWindow*> batch;
  for (std::size_t i = 0; i < 5; ++i) batch.push_back(&data[0].windows[i]);
  const auto x = model::batch_inputs(batch);
  const auto p0 = m.predict(x), p1 = loaded.model->predict(x);
  for (std::size_t i = 0; i < p0.numel(); ++i) EXPECT_EQ(p0.values()[i], p1.values()[i]);
}

TEST(Checkpoint, CorruptionAndVersionErrors) {
  const auto d = temp_dir("ckpt_bad");
  const auto c = tiny_config();
  model::SuiteInModel m(c.model, c.ablation, c.loss, 9);
  trainer::save_checkpoint(d / "a.ckpt", m, c);
  const std::string bytes = slurp(d / "a.ckpt");

  std::ofstream(d / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(trainer::load_checkpoint(d / "trunc.ckpt"), CheckpointError);

  std::string bumped = bytes;
  bumped[8] = 7;  // container schema version
  std::ofstream(d / "ver.ckpt", std::ios::binary) << bumped;
  try {
    trainer::load_checkpoint(d / "ver.ckpt");
    FAIL();
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('7'), std::string::npos) << msg;
    EXPECT_NE(msg.find('1'), std::string::npos) << msg;
  }
}
