// SPDX-License-Identifier: Apache-2.0
#include "suitein/evaluator/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "suitein/common/error.hpp"
#include "suitein/diffnet/tensor.hpp"

namespace suitein::evaluator {

namespace {

constexpr double kTimeTol = 1e-9;

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Truth positions at the predicted timestamps that fall inside the truth span.
struct Paired {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> p, q;
};

Paired pair_up(const Trajectory& pred, const Trajectory& truth) {
  pred.validate();
  truth.validate();
  Paired out;
  if (pred.size() == 0 || truth.size() == 0) throw DataError("empty trajectory");
  std::size_t j = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = pred.t[i];
    if (t < truth.t.front() - kTimeTol || t > truth.t.back() + kTimeTol) continue;
    while (j + 1 < truth.size() && truth.t[j + 1] < t) ++j;
    Eigen::Vector2d q;
    if (j + 1 >= truth.size() || std::abs(truth.t[j] - t) <= kTimeTol) {
      q = truth.p[j];
    } else if (std::abs(truth.t[j + 1] - t) <= kTimeTol) {
      q = truth.p[j + 1];
    } else {
      const double a = (t - truth.t[j]) / (truth.t[j + 1] - truth.t[j]);
      q = (1.0 - a) * truth.p[j] + a * truth.p[j + 1];
    }
    out.t.push_back(t);
    out.p.push_back(pred.p[i]);
    out.q.push_back(q);
  }
  if (out.t.empty()) throw DataError("predicted and truth trajectories do not overlap in time");
  return out;
}

}  // namespace

void Trajectory::validate() const {
  if (t.size() != p.size()) throw DataError("trajectory has mismatched time and position counts");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !p[i].allFinite()) throw DataError("trajectory has non-finite values");
    if (i && !(t[i] > t[i - 1])) throw DataError("trajectory timestamps must strictly increase");
  }
}

Trajectory integrate_trajectory(std::span<const Eigen::Vector2d> v, std::span<const double> starts, double last_end,
                                const Eigen::Vector2d& y0) {
  if (v.size() != starts.size()) throw ShapeError("one velocity per window start is required");
  Trajectory out;
  if (v.empty()) return out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const double next = i + 1 < starts.size() ? starts[i + 1] : last_end;
    if (!(next > starts[i])) throw DataError("windows are not in temporal order at index " + std::to_string(i));
  }
  out.t.reserve(v.size() + 1);
  out.p.reserve(v.size() + 1);
  Eigen::Vector2d y = y0;
  out.t.push_back(starts[0]);
  out.p.push_back(y);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double next = i + 1 < starts.size() ? starts[i + 1] : last_end;
    y += v[i] * (next - starts[i]);
    out.t.push_back(next);
    out.p.push_back(y);
  }
  return out;
}

Trajectory sample_truth(const dataio::PoseStream& truth, std::span<const double> times) {
  Trajectory out;
  for (double t : times) {
    out.t.push_back(t);
    out.p.push_back(dataio::interpolate_position(truth, t).head<2>());
  }
  return out;
}

Trajectory hold_resample(const Trajectory& traj, std::span<const double> times) {
  traj.validate();
  if (traj.size() == 0) throw DataError("cannot resample an empty trajectory");
  Trajectory out;
  out.origin = traj.origin;
  std::size_t j = 0;
  for (double t : times) {
    while (j + 1 < traj.size() && traj.t[j + 1] <= t + kTimeTol) ++j;
    out.t.push_back(t);
    out.p.push_back(traj.p[j]);
  }
  return out;
}

std::vector<double> pointwise_errors(const Trajectory& predicted, const Trajectory& truth) {
  const auto pr = pair_up(predicted, truth);
  std::vector<double> e(pr.t.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = (pr.p[i] - pr.q[i]).norm();
  return e;
}

double ate(const Trajectory& predicted, const Trajectory& truth) {
  const auto pr = pair_up(predicted, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < pr.t.size(); ++i) s += (pr.p[i] - pr.q[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(pr.t.size()));
}

RteResult rte(const Trajectory& predicted, const Trajectory& truth, double interval) {
  if (!(interval > 0.0)) throw ConfigError("RTE interval must be > 0");
  const auto pr = pair_up(predicted, truth);
  const std::size_t n = pr.t.size();
  auto rms_from = [&](std::size_t i, double t_end) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t k = i; k < n && pr.t[k] <= t_end + kTimeTol; ++k) {
      s += ((pr.p[k] - pr.p[i]) - (pr.q[k] - pr.q[i])).squaredNorm();
      ++count;
    }
    return std::sqrt(s / static_cast<double>(count));
  };
  RteResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < n && pr.t[i] + interval <= pr.t.back() + kTimeTol; ++i) {
    sum += rms_from(i, pr.t[i] + interval);
    ++r.intervals;
  }
  if (r.intervals == 0) {
    r.truncated = true;
    r.intervals = 1;
    r.value = rms_from(0, pr.t.back());
    return r;
  }
  r.value = sum / static_cast<double>(r.intervals);
  return r;
}

std::vector<std::pair<double, double>> cdf_of(std::vector<double> errors) {
  std::vector<std::pair<double, double>> out;
  if (errors.empty()) return out;
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i + 1 < errors.size() && errors[i + 1] == errors[i]) continue;
    out.emplace_back(errors[i], i + 1 == errors.size() ? 1.0 : static_cast<double>(i + 1) / n);
  }
  return out;
}

std::vector<std::pair<double, double>> error_cdf(const Trajectory& predicted, const Trajectory& truth) {
  return cdf_of(pointwise_errors(predicted, truth));
}

std::string cdf_csv(const std::vector<std::pair<double, double>>& cdf) {
  std::string out = "error_m,probability\n";
  for (const auto& [e, p] : cdf) out += num(e) + "," + num(p) + "\n";
  return out;
}

// ---------------------------------------------------------------------- PDR

PdrResult pdr_baseline(const dataio::ImuStream& phone, const PdrOptions& o, const Eigen::Vector2d& y0) {
  const std::size_t n = phone.size();
  if (n < 3) throw DataError("phone stream is too short for step detection");
  const double dt = (phone.back().t - phone.front().t) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(phone[i].t - phone[i - 1].t - dt) > 0.01 * dt) {
      throw DataError("phone stream must be uniformly resampled before step detection");
    }
  }
  const double fs = 1.0 / dt;
  if (!(o.cutoff_hz > 0.0) || o.cutoff_hz >= 0.5 * fs) {
    throw ConfigError("low-pass cutoff " + num(o.cutoff_hz) + " Hz is invalid at " + num(fs) + " Hz");
  }
  const auto warmup = static_cast<std::size_t>(std::ceil(o.mean_window_s * fs));
  if (n < warmup + 2) {
    throw DataError("phone stream of " + std::to_string(n) + " samples is shorter than the " +
                    std::to_string(warmup) + "-sample filter warm-up");
  }

  // 2nd-order Butterworth, run forward and backward for zero phase
  const double K = std::tan(std::numbers::pi * o.cutoff_hz / fs);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * K + K * K);
  const double b0 = K * K * norm, b1 = 2.0 * b0, b2 = b0;
  const double a1 = 2.0 * (K * K - 1.0) * norm, a2 = (1.0 - std::numbers::sqrt2 * K + K * K) * norm;
  auto pass = [&](std::vector<double>& x) {
    double x1 = x[0], x2 = x[0], y1 = x[0], y2 = x[0];
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  };
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = phone[i].accel.norm();
  pass(mag);
  std::reverse(mag.begin(), mag.end());
  pass(mag);
  std::reverse(mag.begin(), mag.end());

  // centred moving mean
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + mag[i];
  const std::size_t half = warmup / 2;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0, hi = std::min(n, i + half + 1);
    d[i] = mag[i] - (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }

  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(d[i] > o.threshold && d[i] > d[i - 1] && d[i] >= d[i + 1])) continue;
    if (!peaks.empty() && phone[i].t - phone[peaks.back()].t < o.min_step_interval) {
      if (d[i] > d[peaks.back()]) peaks.back() = i;
      continue;
    }
    peaks.push_back(i);
  }

  PdrResult r;
  r.trajectory.origin = "shared-y0";
  r.trajectory.t.push_back(phone.front().t);
  r.trajectory.p.push_back(y0);
  double heading = o.initial_heading;
  std::size_t k = 0;
  Eigen::Vector2d y = y0;
  for (std::size_t idx : peaks) {
    for (; k < idx; ++k) heading += 0.5 * (phone[k].gyro.z() + phone[k + 1].gyro.z()) * (phone[k + 1].t - phone[k].t);
    y += o.step_length * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    r.step_times.push_back(phone[idx].t);
    r.trajectory.t.push_back(phone[idx].t);
    r.trajectory.p.push_back(y);
  }
  r.trajectory.t.push_back(phone.back().t);
  r.trajectory.p.push_back(y);
  return r;
}

// ------------------------------------------------------------- model runs

SequenceEvaluation evaluate_sequence(model::SuiteInModel& m, const dataio::IngestedSequence& seq,
                                     const EvalOptions& o) {
  if (seq.windows.empty()) throw DataError("sequence '" + seq.manifest.sequence_id + "' has no windows");
  SequenceEvaluation ev;
  std::vector<const dataio::DeviceWindow*> all;
  for (const auto& w : seq.windows) {
    all.push_back(&w);
    ev.window_starts.push_back(w.t_start);
  }
  for (std::size_t start = 0; start < all.size(); start += o.batch_size) {
    const std::vector<const dataio::DeviceWindow*> batch(
        all.begin() + static_cast<long>(start), all.begin() + static_cast<long>(std::min(all.size(), start + o.batch_size)));
    const auto v = m.predict(model::batch_inputs(batch));
    for (std::size_t b = 0; b < batch.size(); ++b) ev.velocities.emplace_back(v.values()[2 * b], v.values()[2 * b + 1]);
  }
  const double last_end = seq.windows.back().t_start + seq.windows.back().duration;
  std::vector<double> times = ev.window_starts;
  times.push_back(last_end);
  ev.truth = sample_truth(seq.truth, times);
  const Eigen::Vector2d y0 = ev.truth.p.front();
  ev.predicted = integrate_trajectory(ev.velocities, ev.window_starts, last_end, y0);
  ev.zero_velocity.t = times;
  ev.zero_velocity.p.assign(times.size(), y0);

  if (o.with_pdr) {
    if (seq.segments.empty() || seq.segments[0].empty()) throw DataError("sequence has no resampled phone stream");
    PdrOptions po = o.pdr;
    // heading of travel at the start, taken from the truth yaw
    const auto& q = seq.truth.front().orientation;
    po.initial_heading = std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()), 1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
    dataio::ImuStream phone;
    for (const auto& seg : seq.segments) phone.insert(phone.end(), seg[0].begin(), seg[0].end());
    const auto pdr = pdr_baseline(phone, po, y0);
    // re-anchor to the truth at the first window start
    auto held = hold_resample(pdr.trajectory, times);
    const Eigen::Vector2d shift = y0 - held.p.front();
    for (auto& p : held.p) p += shift;
    ev.pdr = std::move(held);
  }
  return ev;
}

MetricsReport evaluate_sequences(model::SuiteInModel& m, const std::vector<dataio::IngestedSequence>& seqs,
                                 const std::vector<std::size_t>& indices, const EvalOptions& o, double rte_interval) {
  MetricsReport rep;
  rep.rte_interval = rte_interval;
  std::vector<double> errors;
  for (std::size_t i : indices) {
    const auto& seq = seqs.at(i);
    const auto ev = evaluate_sequence(m, seq, o);
    const std::string id = seq.manifest.sequence_id;
    const std::string mode(dataio::to_string(seq.manifest.mode));
    rep.add(id, mode, "model", ev.predicted, ev.truth);
    rep.add(id, mode, "zero-velocity", ev.zero_velocity, ev.truth);
    if (ev.pdr) rep.add(id, mode, "pdr", *ev.pdr, ev.truth);
    const auto e = pointwise_errors(ev.predicted, ev.truth);
    errors.insert(errors.end(), e.begin(), e.end());
  }
  rep.cdf = cdf_of(std::move(errors));
  return rep;
}

// ----------------------------------------------------------------- reports

void MetricsReport::add(const std::string& id, const std::string& mode, const std::string& method,
                        const Trajectory& predicted, const Trajectory& truth) {
  MetricsRow r;
  r.sequence_id = id;
  r.mode = mode;
  r.method = method;
  r.ate = ate(predicted, truth);
  const auto rr = rte(predicted, truth, rte_interval);
  r.rte = rr.value;
  r.rte_truncated = rr.truncated;
  rows.push_back(r);
}

namespace {

double mean_of(const std::vector<MetricsRow>& rows, const std::string& method, const std::string* mode, bool use_ate) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.method != method || (mode && r.mode != *mode)) continue;
    s += use_ate ? r.ate : r.rte;
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double MetricsReport::mean_ate(const std::string& method) const { return mean_of(rows, method, nullptr, true); }
double MetricsReport::mean_rte(const std::string& method) const { return mean_of(rows, method, nullptr, false); }

std::string MetricsReport::to_csv() const {
  std::string out = "sequence_id,mode,method,ate,rte,rte_truncated\n";
  for (const auto& r : rows) {
    out += r.sequence_id + "," + r.mode + "," + r.method + "," + num(r.ate) + "," + num(r.rte) + "," +
           (r.rte_truncated ? "true" : "false") + "\n";
  }
  return out;
}

std::string MetricsReport::to_yaml() const {
  std::vector<std::string> methods, modes;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
  }
  std::ostringstream o;
  o << "rte_interval_s: " << num(rte_interval) << "\n";
  o << "sequences: " << (methods.empty() ? 0 : std::count_if(rows.begin(), rows.end(), [&](const MetricsRow& r) {
                          return r.method == methods.front();
                        })) << "\n";
  o << "overall:\n";
  for (const auto& m : methods) {
    o << "  " << m << ": {ate: " << num(mean_ate(m)) << ", rte: " << num(mean_rte(m)) << "}\n";
  }
  o << "by_mode:\n";
  for (const auto& mode : modes) {
    o << "  " << mode << ":\n";
    for (const auto& m : methods) {
      const double a = mean_of(rows, m, &mode, true);
      if (std::isnan(a)) continue;
      o << "    " << m << ": {ate: " << num(a) << ", rte: " << num(mean_of(rows, m, &mode, false)) << "}\n";
    }
  }
  o << "rows:\n";
  for (const auto& r : rows) {
    o << "  - {sequence_id: \"" << r.sequence_id << "\", mode: " << r.mode << ", method: " << r.method
      << ", ate: " << num(r.ate) << ", rte: " << num(r.rte) << ", rte_truncated: " << (r.rte_truncated ? "true" : "false")
      << "}\n";
  }
  return o.str();
}

}  // namespace suitein::evaluator
