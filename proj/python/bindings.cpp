// SPDX-License-Identifier: Apache-2.0
// Python bindings: simulation, ingestion, checkpoint inference, metrics and
// the gradient suite. Arrays cross the boundary as float64 numpy arrays.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "suitein/common/error.hpp"
#include "suitein/dataio/pipeline.hpp"
#include "suitein/evaluator/evaluator.hpp"
#include "suitein/model/gradient_suite.hpp"
#include "suitein/synthgen/synthgen.hpp"
#include "suitein/trainer/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace suitein;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

evaluator::Trajectory to_trajectory(const Array& t, const Array& p) {
  if (t.ndim() != 1 || p.ndim() != 2 || p.shape(1) != 2 || p.shape(0) != t.shape(0))
    throw py::value_error("expected t of shape (N,) and p of shape (N, 2)");
  evaluator::Trajectory tr;
  const auto tv = t.unchecked<1>();
  const auto pv = p.unchecked<2>();
  for (py::ssize_t i = 0; i < t.shape(0); ++i) {
    tr.t.push_back(tv(i));
    tr.p.emplace_back(pv(i, 0), pv(i, 1));
  }
  return tr;
}

py::tuple from_trajectory(const evaluator::Trajectory& tr) {
  Array t(static_cast<py::ssize_t>(tr.size()));
  Array p({static_cast<py::ssize_t>(tr.size()), py::ssize_t{2}});
  auto tw = t.mutable_unchecked<1>();
  auto pw = p.mutable_unchecked<2>();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const auto k = static_cast<py::ssize_t>(i);
    tw(k) = tr.t[i];
    pw(k, 0) = tr.p[i].x();
    pw(k, 1) = tr.p[i].y();
  }
  return py::make_tuple(t, p);
}

// Windows as X [N, J, L, 6], y [N, 2], t_start and duration [N].
py::dict windows_dict(const std::vector<dataio::DeviceWindow>& windows) {
  const auto N = static_cast<py::ssize_t>(windows.size());
  const py::ssize_t J = windows.empty() ? 0 : static_cast<py::ssize_t>(windows[0].device_data.size());
  const py::ssize_t L = windows.empty() ? 0 : static_cast<py::ssize_t>(windows[0].length);
  Array X({N, J, L, py::ssize_t{6}});
  Array y({N, py::ssize_t{2}});
  Array t(N);
  Array dur(N);
  double* xp = X.mutable_data();
  for (py::ssize_t n = 0; n < N; ++n) {
    const auto& w = windows[static_cast<std::size_t>(n)];
    for (const auto& block : w.device_data) xp = std::copy(block.begin(), block.end(), xp);
    y.mutable_at(n, 0) = w.v_label[0];
    y.mutable_at(n, 1) = w.v_label[1];
    t.mutable_at(n) = w.t_start;
    dur.mutable_at(n) = w.duration;
  }
  py::dict d;
  d["X"] = X;
  d["y"] = y;
  d["t_start"] = t;
  d["duration"] = dur;
  return d;
}

class PyModel {
 public:
  explicit PyModel(const fs::path& path) : loaded_(trainer::load_checkpoint(path)) {}

  Array predict(const Array& X) {
    const auto& cfg = loaded_.model->config();
    if (X.ndim() != 4 || static_cast<std::size_t>(X.shape(1)) != cfg.devices ||
        static_cast<std::size_t>(X.shape(2)) != cfg.window || X.shape(3) != 6)
      throw py::value_error("expected X of shape (N, devices, window, 6)");
    const auto N = static_cast<std::size_t>(X.shape(0));
    const std::size_t J = cfg.devices, L = cfg.window;
    // [N, J, L, 6] -> J tensors [N, 6, L]
    std::vector<diffnet::Tensor> inputs;
    const double* src = X.data();
    for (std::size_t j = 0; j < J; ++j) {
      std::vector<double> v(N * 6 * L);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t c = 0; c < 6; ++c) v[(n * 6 + c) * L + l] = src[((n * J + j) * L + l) * 6 + c];
      inputs.emplace_back(diffnet::Shape{N, 6, L}, std::move(v));
    }
    diffnet::Tensor out;
    {
      py::gil_scoped_release release;
      out = loaded_.model->predict(inputs);
    }
    Array result({static_cast<py::ssize_t>(N), py::ssize_t{2}});
    std::copy(out.values().begin(), out.values().end(), result.mutable_data());
    return result;
  }

  std::string variant() const { return loaded_.model->ablation().tag(); }
  std::string config_yaml() const { return trainer::experiment_yaml(loaded_.config); }
  std::string config_digest() const { return trainer::config_digest(loaded_.config); }
  std::size_t window() const { return loaded_.model->config().window; }
  std::size_t devices() const { return loaded_.model->config().devices; }

 private:
  trainer::LoadedModel loaded_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-device inertial localization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def(
      "simulate",
      [](const std::string& mode, std::uint64_t seed, double duration, const fs::path& out_dir,
         const std::string& sequence_id) {
        const auto script = synthgen::preset(dataio::parse_walking_mode(mode), seed, duration);
        const auto seq = synthgen::generate(script, seed, sequence_id.empty() ? mode + "-" + std::to_string(seed)
                                                                              : sequence_id);
        return synthgen::write_sequence(seq, out_dir);
      },
      py::arg("mode"), py::arg("seed"), py::arg("duration") = 60.0, py::arg("out_dir"),
      py::arg("sequence_id") = "", "Writes one synthetic sequence; returns the manifest path.");

  m.def(
      "ingest",
      [](const fs::path& manifest, double rate_hz, std::size_t window, std::size_t stride, bool align) {
        dataio::IngestOptions o;
        o.rate_hz = rate_hz;
        o.window = window;
        o.stride = stride;
        o.align = align;
        const auto seq = dataio::ingest_sequence(manifest, o);
        auto d = windows_dict(seq.windows);
        d["offsets"] = seq.offsets;
        d["mode"] = std::string(dataio::to_string(seq.manifest.mode));
        d["sequence_id"] = seq.manifest.sequence_id;
        return d;
      },
      py::arg("manifest"), py::arg("rate_hz") = 25.0, py::arg("window") = 100, py::arg("stride") = 10,
      py::arg("align") = true, "Windows of one sequence: X [N, J, L, 6], y [N, 2], t_start [N].");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const fs::path&>(), py::arg("checkpoint"))
      .def("predict", &PyModel::predict, py::arg("X"), "Velocities [N, 2] for windows X [N, J, L, 6].")
      .def_property_readonly("variant", &PyModel::variant)
      .def_property_readonly("config_yaml", &PyModel::config_yaml)
      .def_property_readonly("config_digest", &PyModel::config_digest)
      .def_property_readonly("window", &PyModel::window)
      .def_property_readonly("devices", &PyModel::devices);

  m.def(
      "integrate_trajectory",
      [](const Array& v, const Array& starts, double last_end, const Array& y0) {
        if (v.ndim() != 2 || v.shape(1) != 2 || starts.ndim() != 1 || starts.shape(0) != v.shape(0) ||
            y0.size() != 2)
          throw py::value_error("expected v (N, 2), starts (N,), y0 (2,)");
        std::vector<Eigen::Vector2d> vel;
        for (py::ssize_t i = 0; i < v.shape(0); ++i) vel.emplace_back(v.at(i, 0), v.at(i, 1));
        std::vector<double> s(starts.data(), starts.data() + starts.shape(0));
        return from_trajectory(
            evaluator::integrate_trajectory(vel, s, last_end, Eigen::Vector2d(y0.data()[0], y0.data()[1])));
      },
      py::arg("v"), py::arg("starts"), py::arg("last_end"), py::arg("y0"), "Returns (t, p).");

  m.def(
      "ate",
      [](const Array& pt, const Array& pp, const Array& tt, const Array& tp) {
        return evaluator::ate(to_trajectory(pt, pp), to_trajectory(tt, tp));
      },
      py::arg("pred_t"), py::arg("pred_p"), py::arg("truth_t"), py::arg("truth_p"));

  m.def(
      "rte",
      [](const Array& pt, const Array& pp, const Array& tt, const Array& tp, double interval) {
        const auto r = evaluator::rte(to_trajectory(pt, pp), to_trajectory(tt, tp), interval);
        py::dict d;
        d["value"] = r.value;
        d["truncated"] = r.truncated;
        d["intervals"] = r.intervals;
        return d;
      },
      py::arg("pred_t"), py::arg("pred_p"), py::arg("truth_t"), py::arg("truth_p"), py::arg("interval") = 60.0);

  m.def(
      "error_cdf",
      [](const Array& pt, const Array& pp, const Array& tt, const Array& tp) {
        return evaluator::error_cdf(to_trajectory(pt, pp), to_trajectory(tt, tp));
      },
      py::arg("pred_t"), py::arg("pred_p"), py::arg("truth_t"), py::arg("truth_p"),
      "List of (error, probability) pairs.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed, bool inject_fault) {
        model::GradientSuiteOptions o;
        o.seed = seed;
        if (inject_fault) o.inject_fault = 0.01;
        std::vector<model::GradientCheckRow> rows;
        {
          py::gil_scoped_release release;
          rows = model::run_gradient_suite(o);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["component"] = r.component;
          d["max_relative_error"] = r.max_relative_error;
          d["threshold"] = r.threshold;
          d["passed"] = r.passed();
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0, py::arg("inject_fault") = false);

  m.def(
      "train",
      [](const fs::path& config, const std::vector<std::string>& overrides, const fs::path& out_dir) {
        auto cfg = trainer::load_config(config, overrides);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        trainer::TrainResult res;
        {
          py::gil_scoped_release release;
          const auto seqs = trainer::load_dataset(cfg.data);
          std::vector<dataio::WalkingMode> modes;
          for (const auto& q : seqs) modes.push_back(q.manifest.mode);
          const auto split = trainer::split_dataset(modes, cfg.train.split, cfg.seed);
          res = trainer::train(cfg, trainer::gather_windows(seqs, split.train),
                               trainer::gather_windows(seqs, split.val), {cfg.output_dir, false});
        }
        py::dict d;
        d["variant"] = res.report.variant;
        d["config_digest"] = res.report.config_digest;
        d["best_epoch"] = res.report.best_epoch;
        d["best_val_loss"] = res.report.best_val_loss;
        d["total_steps"] = res.report.total_steps;
        d["checkpoint"] = res.report.checkpoint_path;
        return d;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("out_dir") = fs::path{},
      "Trains on the configured data directory; writes model.ckpt and report.jsonl to out_dir.");

  m.def(
      "config_digest",
      [](const std::string& yaml_text) { return trainer::config_digest(trainer::parse_config(yaml_text)); },
      py::arg("yaml_text"));
}
