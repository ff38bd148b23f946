// SPDX-License-Identifier: Apache-2.0
//
// suitein: simulate, ingest, train, eval, trace, gradcheck, ablate.
// Exit codes: 0 ok, 1 other failure, 2 usage/config/data, 3 divergence,
// 4 artifact mismatch, 5 gradient check failure.
#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "suitein/common/digest.hpp"
#include "suitein/common/error.hpp"
#include "suitein/dataio/io.hpp"
#include "suitein/diffnet/tensor.hpp"
#include "suitein/evaluator/evaluator.hpp"
#include "suitein/model/gradient_suite.hpp"
#include "suitein/synthgen/synthgen.hpp"
#include "suitein/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace suitein;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kDiverged = 3, kMismatch = 4, kGradcheck = 5 };

// A usage problem detected after parsing.
struct UsageError : Error {
  using Error::Error;
};

void print_digest(const std::string& canonical) { std::cout << "config digest: " << short_digest(canonical) << "\n"; }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

/// Relative config paths fall back to $SUITEIN_CONFIG_DIR; an empty path means
/// $SUITEIN_CONFIG_DIR/train.yaml.
fs::path resolve_config(const std::string& given) {
  const char* env = std::getenv("SUITEIN_CONFIG_DIR");
  if (given.empty()) {
    if (!env) throw UsageError("no --config given and SUITEIN_CONFIG_DIR is not set");
    return fs::path(env) / "train.yaml";
  }
  fs::path p(given);
  if (fs::exists(p) || p.is_absolute() || !env) return p;
  return fs::path(env) / p;
}

std::vector<dataio::WalkingMode> parse_modes(const std::string& list) {
  std::vector<dataio::WalkingMode> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    const auto mode = dataio::parse_walking_mode(tok);
    if (std::find(dataio::kSimulatedModes.begin(), dataio::kSimulatedModes.end(), mode) ==
        dataio::kSimulatedModes.end()) {
      throw UsageError("mode " + tok + " cannot be simulated (use STW, PVW, MVW, DRW or DLW)");
    }
    out.push_back(mode);
  }
  if (out.empty()) throw UsageError("--mode is empty");
  return out;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::string mode;
  double duration = 60.0;
  std::uint64_t seed = 0;
  std::size_t count = 1;
  std::string out;
  std::string subject = "synthetic";
};

int run_simulate(const SimulateArgs& a) {
  const auto modes = parse_modes(a.mode);
  if (a.count < 1) throw UsageError("--count must be >= 1");
  print_digest("simulate\nmode: " + a.mode + "\nduration: " + num(a.duration) + "\nseed: " + std::to_string(a.seed) +
               "\ncount: " + std::to_string(a.count) + "\nsubject: " + a.subject + "\n");
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto mode = modes[i % modes.size()];
    const std::uint64_t seed = a.seed + i;
    std::string id = std::string(dataio::to_string(mode)) + "-" + std::to_string(seed);
    fs::path dir = a.out;
    if (a.count > 1) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%03zu-", i);
      dir /= buf + id;
    }
    const auto script = synthgen::preset(mode, seed, a.duration);
    const auto seq = synthgen::generate(script, seed, id, a.subject);
    synthgen::write_sequence(seq, dir);
    std::cout << "wrote " << dir.string() << "\n";
  }
  return kOk;
}

// -------------------------------------------------------------------- ingest

struct IngestArgs {
  std::string manifest;
  std::string out;
  double rate = 25.0;
  std::size_t window = 100;
  std::size_t stride = 10;
  bool no_align = false;
};

int run_ingest(const IngestArgs& a) {
  trainer::DataConfig dc;
  dc.rate_hz = a.rate;
  dc.window = a.window;
  dc.stride = a.stride;
  dc.align = !a.no_align;
  print_digest("ingest\nmanifest: " + a.manifest + "\nrate_hz: " + num(a.rate) + "\nwindow: " +
               std::to_string(a.window) + "\nstride: " + std::to_string(a.stride) +
               "\nalign: " + (dc.align ? "true" : "false") + "\n");
  const auto seq = dataio::ingest_sequence(a.manifest, trainer::ingest_options(dc));
  std::string csv = "t_start,duration,vx,vy\n";
  for (const auto& w : seq.windows) {
    csv += num(w.t_start) + "," + num(w.duration) + "," + num(w.v_label[0]) + "," + num(w.v_label[1]) + "\n";
  }
  std::string yaml = "sequence_id: \"" + seq.manifest.sequence_id + "\"\nwindows: " + std::to_string(seq.windows.size()) +
                     "\nsegments: " + std::to_string(seq.segments.size()) + "\noffsets_s:\n";
  for (std::size_t j = 0; j < seq.offsets.size(); ++j) {
    yaml += "  " + seq.manifest.devices[j].name + ": " + num(seq.offsets[j]) + "\n";
  }
  write_file(fs::path(a.out) / "windows.csv", csv);
  write_file(fs::path(a.out) / "ingest.yaml", yaml);
  std::cout << seq.windows.size() << " windows\n" << yaml;
  return kOk;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  bool verbose = false;
};

std::string split_yaml(const std::vector<dataio::IngestedSequence>& seqs, const trainer::DatasetSplit& s) {
  std::string y;
  const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
      {"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (const auto& [name, idx] : parts) {
    y += std::string(name) + ":\n";
    for (auto i : *idx) y += "  - \"" + seqs[i].manifest.sequence_id + "\"\n";
  }
  return y;
}

trainer::TrainConfig load_train_config(const std::string& path, std::vector<std::string> overrides,
                                       const std::string& out) {
  if (!out.empty()) overrides.push_back("output.dir=" + fs::absolute(out).string());
  const fs::path p = resolve_config(path);
  if (!fs::exists(p)) throw UsageError("config '" + p.string() + "' not found");
  return trainer::load_config(p, overrides);
}

std::vector<dataio::WalkingMode> modes_of(const std::vector<dataio::IngestedSequence>& seqs) {
  std::vector<dataio::WalkingMode> m;
  for (const auto& s : seqs) m.push_back(s.manifest.mode);
  return m;
}

int run_train(const TrainArgs& a) {
  const auto cfg = load_train_config(a.config, a.overrides, a.out);
  print_digest(trainer::experiment_yaml(cfg));
  std::cout << "variant: " << cfg.ablation.tag() << "\n";
  const auto seqs = trainer::load_dataset(cfg.data);
  const auto split = trainer::split_dataset(modes_of(seqs), cfg.train.split, cfg.seed);
  const auto res = trainer::train(cfg, trainer::gather_windows(seqs, split.train),
                                   trainer::gather_windows(seqs, split.val), {cfg.output_dir, a.verbose});
  write_file(cfg.output_dir / "config.yaml", trainer::experiment_yaml(cfg));
  write_file(cfg.output_dir / "split.yaml", split_yaml(seqs, split));
  std::cout << "best epoch " << res.report.best_epoch << " val loss " << num(res.report.best_val_loss) << " after "
            << res.report.total_steps << " steps\ncheckpoint " << res.report.checkpoint_path.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string config;
  std::string split = "all";
  std::string out;
  std::string baseline;
  std::string cdf;
  double rte_interval = 60.0;
};

std::vector<std::size_t> pick_split(const std::vector<dataio::IngestedSequence>& seqs, const trainer::TrainConfig& cfg,
                                    const std::string& which) {
  if (which == "all") {
    std::vector<std::size_t> all(seqs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const auto s = trainer::split_dataset(modes_of(seqs), cfg.train.split, cfg.seed);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw UsageError("--split must be all, train, val or test");
}

void check_devices(const model::SuiteInModel& m, const std::vector<dataio::IngestedSequence>& seqs) {
  for (const auto& s : seqs) {
    if (s.manifest.devices.size() != m.config().devices) {
      throw CheckpointError("checkpoint expects " + std::to_string(m.config().devices) + " devices but sequence '" +
                            s.manifest.sequence_id + "' has " + std::to_string(s.manifest.devices.size()));
    }
  }
}

int run_eval(const EvalArgs& a) {
  if (!a.baseline.empty() && a.baseline != "pdr") throw UsageError("--baseline accepts only 'pdr'");
  auto loaded = trainer::load_checkpoint(a.checkpoint);
  if (!a.config.empty()) {
    const auto given = trainer::load_config(resolve_config(a.config));
    // the model-defining sections must agree
    auto model_part = [](trainer::TrainConfig c) {
      c.seed = 0;
      c.data = {};
      c.train = {};
      c.output_dir.clear();
      return trainer::to_yaml(c);
    };
    if (model_part(given) != model_part(loaded.config)) {
      throw CheckpointError("config '" + a.config + "' does not describe the model in '" + a.checkpoint + "'");
    }
  }
  trainer::DataConfig dc = loaded.config.data;
  if (!a.data.empty()) dc.dir = fs::absolute(a.data);
  print_digest(trainer::experiment_yaml(loaded.config) + "eval:\n  data: " + dc.dir.generic_string() + "\n  split: " + a.split +
               "\n  baseline: " + a.baseline + "\n  rte_interval: " + num(a.rte_interval) + "\n");
  const auto seqs = trainer::load_dataset(dc);
  check_devices(*loaded.model, seqs);
  const auto idx = pick_split(seqs, loaded.config, a.split);
  evaluator::EvalOptions eo;
  eo.with_pdr = a.baseline == "pdr";
  const auto rep = evaluator::evaluate_sequences(*loaded.model, seqs, idx, eo, a.rte_interval);
  if (!a.out.empty()) {
    write_file(fs::path(a.out) / "metrics.yaml", rep.to_yaml());
    write_file(fs::path(a.out) / "metrics.csv", rep.to_csv());
  }
  if (!a.cdf.empty()) write_file(a.cdf, evaluator::cdf_csv(rep.cdf));
  std::cout << rep.to_yaml();
  return kOk;
}

// --------------------------------------------------------------------- trace

struct TraceArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out;
};

int run_trace(const TraceArgs& a) {
  auto loaded = trainer::load_checkpoint(a.checkpoint);
  print_digest(trainer::experiment_yaml(loaded.config) + "trace:\n  manifest: " + a.manifest + "\n");
  const auto seq = dataio::ingest_sequence(a.manifest, trainer::ingest_options(loaded.config.data));
  check_devices(*loaded.model, {seq});
  auto& m = *loaded.model;
  const std::size_t J = m.config().devices;
  std::string csv = "t_start,label_vx,label_vy,v_glb_x,v_glb_y,v_loc_x,v_loc_y,v_x,v_y";
  for (std::size_t j = 0; j < J; ++j) csv += ",alpha_" + seq.manifest.devices[j].name;
  csv += "\n";
  diffnet::NoGradGuard guard;
  for (std::size_t start = 0; start < seq.windows.size(); start += 128) {
    std::vector<const dataio::DeviceWindow*> batch;
    for (std::size_t i = start; i < std::min(seq.windows.size(), start + 128); ++i) batch.push_back(&seq.windows[i]);
    const auto st = m.fuse(m.encode(model::batch_inputs(batch), false));
    auto at = [](const diffnet::Tensor& t, std::size_t i) {
      return t.defined() ? num(t.values()[i]) : std::string();
    };
    for (std::size_t b = 0; b < batch.size(); ++b) {
      csv += num(batch[b]->t_start) + "," + num(batch[b]->v_label[0]) + "," + num(batch[b]->v_label[1]);
      for (const auto* t : {&st.v_glb, &st.v_loc, &st.v}) csv += "," + at(*t, 2 * b) + "," + at(*t, 2 * b + 1);
      for (std::size_t j = 0; j < J; ++j) csv += "," + at(st.alpha, b * J + j);
      csv += "\n";
    }
  }
  write_file(a.out, csv);
  std::cout << "traced " << seq.windows.size() << " windows to " << a.out << "\n";
  return kOk;
}

// ----------------------------------------------------------------- gradcheck

int run_gradcheck(std::uint64_t seed, bool inject_fault) {
  print_digest("gradcheck\nseed: " + std::to_string(seed) + "\ninject_fault: " + (inject_fault ? "true" : "false") +
               "\n");
  model::GradientSuiteOptions o;
  o.seed = seed;
  o.inject_fault = inject_fault ? 0.01 : 0.0;
  const auto rows = model::run_gradient_suite(o);
  std::cout << "component,max_relative_error,threshold,elements,worst,status\n";
  std::vector<std::string> failed;
  for (const auto& r : rows) {
    std::cout << r.component << "," << num(r.max_relative_error) << "," << num(r.threshold) << "," << r.elements << ","
              << r.worst << "," << (r.passed() ? "pass" : "FAIL") << "\n";
    if (!r.passed()) failed.push_back(r.component);
  }
  if (failed.empty()) return kOk;
  std::cerr << "gradient check failed for:";
  for (const auto& f : failed) std::cerr << " " << f;
  std::cerr << "\n";
  return kGradcheck;
}

// -------------------------------------------------------------------- ablate

int run_ablate(const TrainArgs& a) {
  const auto base = load_train_config(a.config, a.overrides, a.out);
  print_digest(trainer::experiment_yaml(base) + "ablate: [1, 2, 3, 4, 5, 6]\n");
  const auto seqs = trainer::load_dataset(base.data);
  const auto split = trainer::split_dataset(modes_of(seqs), base.train.split, base.seed);
  const auto tr = trainer::gather_windows(seqs, split.train), va = trainer::gather_windows(seqs, split.val);
  std::string csv = "variant,tag,contrast_fe,weighted_gf,attentive_la,status,best_val_loss,ate,rte,zero_velocity_ate\n";
  bool warned = false;
  for (int v = 1; v <= 6; ++v) {
    auto cfg = base;
    cfg.ablation = model::AblationConfig::from_variant(v);
    cfg.output_dir = base.output_dir / ("v" + std::to_string(v));
    const auto& ab = cfg.ablation;
    std::string row = std::to_string(v) + "," + ab.tag() + "," + (ab.contrast_fe ? "1" : "0") + "," +
                      (ab.weighted_gf ? "1" : "0") + "," + (ab.attentive_la ? "1" : "0") + ",";
    try {
      const auto res = trainer::train(cfg, tr, va, {cfg.output_dir, a.verbose});
      const auto rep = evaluator::evaluate_sequences(*res.model, seqs, split.test);
      row += "ok," + num(res.report.best_val_loss) + "," + num(rep.mean_ate("model")) + "," + num(rep.mean_rte("model")) +
             "," + num(rep.mean_ate("zero-velocity"));
    } catch (const DivergenceError& e) {
      std::cerr << "warning: variant " << v << " diverged (" << e.component() << "): " << e.what() << "\n";
      row += "failed,,,,";
      warned = true;
    }
    csv += row + "\n";
    std::cout << row << "\n";
  }
  write_file(base.output_dir / "ablation.csv", csv);
  if (warned) std::cerr << "warning: some variants failed; see ablation.csv\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"suitein: multi-device inertial pedestrian localisation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Write synthetic sequences");
  s->add_option("--mode", sim.mode, "STW, PVW, MVW, DRW or DLW; comma list cycles over --count")->required();
  s->add_option("--duration", sim.duration, "Seconds (>= 20)");
  s->add_option("--seed", sim.seed);
  s->add_option("--count", sim.count, "Number of sequences; > 1 writes one sub-directory each");
  s->add_option("--subject", sim.subject);
  s->add_option("--out", sim.out, "Output directory")->required();

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Align, resample and window one sequence");
  i->add_option("--manifest", ing.manifest)->required()->check(CLI::ExistingFile);
  i->add_option("--out", ing.out)->required();
  i->add_option("--rate", ing.rate);
  i->add_option("--window", ing.window);
  i->add_option("--stride", ing.stride);
  i->add_flag("--no-align", ing.no_align);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a config file");
  t->add_option("--config", tr.config, "YAML config; relative paths also searched in $SUITEIN_CONFIG_DIR");
  t->add_option("--override", tr.overrides, "dotted.key=value, repeatable");
  t->add_option("--out", tr.out, "Output directory (overrides output.dir)");
  t->add_flag("--verbose", tr.verbose);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "Sequence directory (default: the checkpoint's data.dir)");
  e->add_option("--config", ev.config, "Config the checkpoint must match");
  e->add_option("--split", ev.split, "all, train, val or test");
  e->add_option("--out", ev.out, "Directory for metrics.yaml and metrics.csv");
  e->add_option("--baseline", ev.baseline, "Add a baseline row (pdr)");
  e->add_option("--cdf", ev.cdf, "Write the error CDF as CSV");
  e->add_option("--rte-interval", ev.rte_interval, "Seconds");

  TraceArgs tc;
  auto* c = app.add_subcommand("trace", "Dump per-window fusion weights and velocities");
  c->add_option("--checkpoint", tc.checkpoint)->required();
  c->add_option("--manifest", tc.manifest)->required()->check(CLI::ExistingFile);
  c->add_option("--out", tc.out)->required();

  std::uint64_t gc_seed = 0;
  bool gc_fault = false;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  g->add_option("--seed", gc_seed);
  g->add_flag("--inject-fault", gc_fault, "Corrupt the Linear weight gradient (test hook)");

  TrainArgs ab;
  auto* a = app.add_subcommand("ablate", "Train and evaluate the six ablation variants");
  a->add_option("--config", ab.config);
  a->add_option("--override", ab.overrides);
  a->add_option("--out", ab.out);
  a->add_flag("--verbose", ab.verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsage;
  }

  try {
    if (*s) return run_simulate(sim);
    if (*i) return run_ingest(ing);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*c) return run_trace(tc);
    if (*g) return run_gradcheck(gc_seed, gc_fault);
    if (*a) return run_ablate(ab);
  } catch (const DivergenceError& ex) {
    std::cerr << "error: training diverged in " << ex.component() << ": " << ex.what() << "\n";
    return kDiverged;
  } catch (const CheckpointError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kMismatch;
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const ParseError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const DataError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
