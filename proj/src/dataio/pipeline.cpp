// SPDX-License-Identifier: Apache-2.0
#include "suitein/dataio/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "suitein/common/error.hpp"
#include "suitein/dataio/io.hpp"

namespace suitein::dataio {

namespace {

constexpr double kTimeTol = 1e-9;

template <typename Sample>
std::size_t bracket(const std::vector<Sample>& s, double t) {
  // index i with s[i].t <= t < s[i+1].t, clamped to [0, n-2]
  auto it = std::upper_bound(s.begin(), s.end(), t,
                             [](double v, const Sample& x) { return v < x.t; });
  std::size_t i = it == s.begin() ? 0 : static_cast<std::size_t>(it - s.begin()) - 1;
  return std::min(i, s.size() - 2);
}

double native_rate(const ImuStream& s) {
  if (s.size() < 2) return std::numeric_limits<double>::infinity();
  return static_cast<double>(s.size() - 1) / (s.back().t - s.front().t);
}

std::size_t grid_count(double t0, double t_last, double rate) {
  if (t_last < t0 - kTimeTol) return 0;
  return static_cast<std::size_t>(std::floor((t_last - t0) * rate + 1e-7)) + 1;
}

double grid_start(double t, double rate) { return std::ceil(t * rate - 1e-6) / rate; }

// Signed vertical acceleration with everything below the spike threshold zeroed.
std::vector<double> spike_train(std::vector<double> az, const AlignOptions& o) {
  double peak = 0.0;
  for (double v : az) peak = std::max(peak, std::abs(v));
  const double threshold = std::max(o.spike_fraction * peak, o.min_spike_accel);
  for (double& v : az) {
    if (std::abs(v) < threshold) v = 0.0;
  }
  return az;
}

std::size_t count_spikes(const std::vector<double>& train, double rate, double separation) {
  std::size_t count = 0;
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < train.size(); ++k) {
    if (train[k] == 0.0) continue;
    const double t = static_cast<double>(k) / rate;
    if (t - last >= separation) ++count;
    last = t;
  }
  return count;
}

// Vertical acceleration of a stream sampled on grid g (zero outside its span).
std::vector<double> stream_az(const ImuStream& s, double g0, double rate, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (s.size() < 2) return out;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = g0 + static_cast<double>(k) / rate;
    if (t < s.front().t || t > s.back().t) continue;
    const std::size_t i = bracket(s, t);
    const double w = (t - s[i].t) / (s[i + 1].t - s[i].t);
    out[k] = (1.0 - w) * s[i].accel.z() + w * s[i + 1].accel.z();
  }
  return out;
}

// Second difference of truth height on grid g (zero outside its span).
std::vector<double> truth_az(const PoseStream& truth, double g0, double rate, std::size_t n) {
  std::vector<double> z(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < n; ++k) {
    const double t = g0 + static_cast<double>(k) / rate;
    if (t < truth.front().t - kTimeTol || t > truth.back().t + kTimeTol) continue;
    z[k] = interpolate_position(truth, std::clamp(t, truth.front().t, truth.back().t)).z();
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (std::isnan(z[k - 1]) || std::isnan(z[k]) || std::isnan(z[k + 1])) continue;
    out[k] = (z[k + 1] - 2.0 * z[k] + z[k - 1]) * rate * rate;
  }
  return out;
}

}  // namespace

ImuStream resample_on(const ImuStream& stream, const TimeGrid& grid) {
  if (stream.empty()) throw DataError("resample: empty stream");
  ImuStream out;
  out.reserve(grid.count);
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double t = grid.at(k);
    if (t < stream.front().t - kTimeTol || t > stream.back().t + kTimeTol) {
      throw DataError("resample: grid time " + std::to_string(t) + " outside stream span [" +
                      std::to_string(stream.front().t) + ", " + std::to_string(stream.back().t) + "]");
    }
    if (stream.size() == 1) {
      out.push_back({t, stream[0].accel, stream[0].gyro});
      continue;
    }
    const std::size_t i = bracket(stream, t);
    const auto& a = stream[i];
    const auto& b = stream[i + 1];
    const double w = (t - a.t) / (b.t - a.t);
    if (w == 0.0) {
      out.push_back({t, a.accel, a.gyro});
    } else if (w == 1.0) {
      out.push_back({t, b.accel, b.gyro});
    } else {
      out.push_back({t, (1.0 - w) * a.accel + w * b.accel, (1.0 - w) * a.gyro + w * b.gyro});
    }
  }
  return out;
}

ImuStream resample(const ImuStream& stream, double rate_hz) {
  if (stream.empty()) throw DataError("resample: empty stream");
  if (!(rate_hz > 0.0)) throw ConfigError("resample: rate must be positive");
  if (rate_hz > native_rate(stream) * (1.0 + 1e-6)) {
    throw ConfigError("resample: target rate " + std::to_string(rate_hz) +
                      " Hz exceeds the native rate " + std::to_string(native_rate(stream)) + " Hz");
  }
  const TimeGrid grid{stream.front().t, rate_hz, grid_count(stream.front().t, stream.back().t, rate_hz)};
  return resample_on(stream, grid);
}

Eigen::Vector3d interpolate_position(const PoseStream& truth, double t) {
  if (truth.empty()) throw DataError("truth trajectory is empty");
  if (t < truth.front().t - kTimeTol || t > truth.back().t + kTimeTol) {
    throw DataError("truth does not cover t=" + std::to_string(t) + " (span [" +
                    std::to_string(truth.front().t) + ", " + std::to_string(truth.back().t) + "])");
  }
  if (truth.size() == 1) return truth[0].position;
  const std::size_t i = bracket(truth, t);
  const double w = (t - truth[i].t) / (truth[i + 1].t - truth[i].t);
  if (w == 0.0) return truth[i].position;
  if (w == 1.0) return truth[i + 1].position;
  return (1.0 - w) * truth[i].position + w * truth[i + 1].position;
}

std::vector<ImuStream> fill_gaps(const ImuStream& stream, double nominal_period, double max_gap) {
  if (!(nominal_period > 0.0)) throw ConfigError("fill_gaps: nominal period must be positive");
  std::vector<ImuStream> out;
  if (stream.empty()) return out;
  out.emplace_back();
  out.back().push_back(stream.front());
  for (std::size_t i = 1; i < stream.size(); ++i) {
    const auto& prev = stream[i - 1];
    const double gap = stream[i].t - prev.t;
    if (gap > max_gap + kTimeTol) {
      out.emplace_back();
    } else if (gap > 1.5 * nominal_period) {
      for (double t = prev.t + nominal_period; t < stream[i].t - 0.5 * nominal_period;
           t += nominal_period) {
        out.back().push_back({t, prev.accel, prev.gyro});
      }
    }
    out.back().push_back(stream[i]);
  }
  return out;
}

ImuStream project_to_global(const ImuStream& stream, const Eigen::Matrix3d& rotation) {
  const double orth = (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ConfigError("project_to_global: matrix is not a proper rotation (|RRᵀ-I| = " +
                      std::to_string(orth) + ", det = " + std::to_string(rotation.determinant()) + ")");
  }
  ImuStream out(stream);
  for (auto& s : out) {
    s.accel = rotation * s.accel;
    s.gyro = rotation * s.gyro;
  }
  return out;
}

ImuStream shift_time(const ImuStream& stream, double offset) {
  ImuStream out(stream);
  for (auto& s : out) s.t += offset;
  return out;
}

std::size_t count_vertical_spikes(const ImuStream& stream, const AlignOptions& o) {
  if (stream.size() < 2) return 0;
  const std::size_t n = grid_count(stream.front().t, stream.back().t, o.grid_rate_hz);
  const auto train = spike_train(stream_az(stream, stream.front().t, o.grid_rate_hz, n), o);
  return count_spikes(train, o.grid_rate_hz, o.min_spike_separation);
}

std::vector<double> align_by_jumps(const std::vector<ImuStream>& streams, const PoseStream& truth,
                                   const AlignOptions& o) {
  if (truth.size() < 3) throw DataError("align_by_jumps: truth has fewer than 3 samples");
  const double rate = o.grid_rate_hz;
  const auto lag_max = static_cast<long>(std::llround(o.max_lag * rate));

  // A common grid wide enough for every stream and the truth.
  double lo = truth.front().t, hi = truth.back().t;
  for (const auto& s : streams) {
    if (s.size() < 2) throw DataError("align_by_jumps: stream has fewer than 2 samples");
    lo = std::min(lo, s.front().t);
    hi = std::max(hi, s.back().t);
  }
  const double g0 = std::floor(lo * rate) / rate;
  const std::size_t n = grid_count(g0, hi, rate) + 1;

  const auto ref = spike_train(truth_az(truth, g0, rate, n), o);
  const std::size_t ref_spikes = count_spikes(ref, rate, o.min_spike_separation);
  if (ref_spikes < o.min_spikes) {
    throw DataError("align_by_jumps: truth shows " + std::to_string(ref_spikes) +
                    " vertical spikes, need at least " + std::to_string(o.min_spikes));
  }

  std::vector<double> offsets;
  for (std::size_t j = 0; j < streams.size(); ++j) {
    const auto sig = spike_train(stream_az(streams[j], g0, rate, n), o);
    const std::size_t spikes = count_spikes(sig, rate, o.min_spike_separation);
    if (spikes < o.min_spikes) {
      throw DataError("align_by_jumps: stream " + std::to_string(j) + " shows " +
                      std::to_string(spikes) + " vertical spikes, need at least " +
                      std::to_string(o.min_spikes));
    }
    // score(l) = sum_k ref[k] * sig[k - l]; offset = l / rate.
    std::vector<double> score(static_cast<std::size_t>(2 * lag_max + 1), 0.0);
    for (long l = -lag_max; l <= lag_max; ++l) {
      double acc = 0.0;
      for (long k = 0; k < static_cast<long>(n); ++k) {
        const long m = k - l;
        if (m < 0 || m >= static_cast<long>(n)) continue;
        acc += ref[static_cast<std::size_t>(k)] * sig[static_cast<std::size_t>(m)];
      }
      score[static_cast<std::size_t>(l + lag_max)] = acc;
    }
    const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
    double refine = 0.0;
    if (best > 0 && best + 1 < score.size()) {
      const double a = score[best - 1], b = score[best], c = score[best + 1];
      const double den = a - 2.0 * b + c;
      if (den < 0.0) refine = std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
    }
    offsets.push_back((static_cast<double>(static_cast<long>(best) - lag_max) + refine) / rate);
  }
  return offsets;
}

std::vector<DeviceWindow> make_windows(const std::vector<ImuStream>& streams, const TimeGrid& grid,
                                       const PoseStream& truth, std::size_t window,
                                       std::size_t stride, std::size_t sequence_index) {
  if (window == 0 || stride == 0) throw ConfigError("make_windows: window and stride must be >= 1");
  if (streams.empty()) throw DataError("make_windows: no device streams");
  for (const auto& s : streams) {
    if (s.size() != grid.count) {
      throw DataError("make_windows: stream has " + std::to_string(s.size()) +
                      " samples, grid has " + std::to_string(grid.count));
    }
  }
  const std::size_t N = grid.count;
  if (N < window) {
    throw DataError("make_windows: span of " + std::to_string(N) + " samples is shorter than one window of " +
                    std::to_string(window));
  }
  const std::size_t count = (N - window) / stride + 1;
  std::vector<DeviceWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t k0 = w * stride;
    DeviceWindow win;
    win.length = window;
    win.sequence_index = sequence_index;
    win.t_start = grid.at(k0);
    const double t_end = grid.at(k0 + window);
    win.duration = t_end - win.t_start;
    const Eigen::Vector3d d = interpolate_position(truth, t_end) - interpolate_position(truth, win.t_start);
    win.v_label = {d.x() / win.duration, d.y() / win.duration};
    win.device_data.reserve(streams.size());
    for (const auto& s : streams) {
      std::vector<double> block(window * 6);
      for (std::size_t i = 0; i < window; ++i) {
        const auto& x = s[k0 + i];
        for (int c = 0; c < 3; ++c) {
          block[i * 6 + static_cast<std::size_t>(c)] = x.accel[c];
          block[i * 6 + 3 + static_cast<std::size_t>(c)] = x.gyro[c];
        }
      }
      win.device_data.push_back(std::move(block));
    }
    out.push_back(std::move(win));
  }
  return out;
}

IngestedSequence ingest_streams(const SequenceManifest& manifest, std::vector<ImuStream> streams,
                                PoseStream truth, const IngestOptions& o, std::size_t sequence_index) {
  if (streams.size() != manifest.devices.size()) {
    throw DataError("ingest: manifest lists " + std::to_string(manifest.devices.size()) +
                    " devices but " + std::to_string(streams.size()) + " streams were given");
  }
  if (truth.empty()) throw DataError("ingest: empty truth");
  IngestedSequence seq;
  seq.manifest = manifest;
  for (std::size_t j = 0; j < streams.size(); ++j) {
    if (streams[j].empty()) throw DataError("ingest: device '" + manifest.devices[j].name + "' is empty");
    const Eigen::Matrix3d r = manifest.devices[j].initial_rotation.normalized().toRotationMatrix();
    streams[j] = project_to_global(streams[j], r);
  }
  seq.offsets.assign(streams.size(), 0.0);
  if (o.align) {
    seq.offsets = align_by_jumps(streams, truth, o.align_options);
    for (std::size_t j = 0; j < streams.size(); ++j) streams[j] = shift_time(streams[j], seq.offsets[j]);
  }

  // Gap-free pieces per device, then their common intersection with the truth span.
  std::vector<std::vector<ImuStream>> pieces(streams.size());
  for (std::size_t j = 0; j < streams.size(); ++j) {
    const double rate = native_rate(streams[j]);
    const double nominal = manifest.devices[j].rate_hz > 0.0 ? 1.0 / manifest.devices[j].rate_hz
                                                               : 1.0 / rate;
    pieces[j] = fill_gaps(streams[j], nominal, o.max_gap);
  }
  std::vector<std::pair<double, double>> common{{truth.front().t, truth.back().t}};
  for (const auto& dev : pieces) {
    std::vector<std::pair<double, double>> next;
    for (const auto& [a, b] : common) {
      for (const auto& p : dev) {
        const double lo = std::max(a, p.front().t), hi = std::min(b, p.back().t);
        if (hi > lo) next.emplace_back(lo, hi);
      }
    }
    common = std::move(next);
  }

  const double dt = 1.0 / o.rate_hz;
  for (const auto& [a, b] : common) {
    TimeGrid grid;
    grid.rate_hz = o.rate_hz;
    grid.t0 = grid_start(a, o.rate_hz);
    // grid points inside every device piece, and t_k + dt covered by the truth
    const std::size_t by_devices = grid_count(grid.t0, b, o.rate_hz);
    const std::size_t by_truth = grid_count(grid.t0, truth.back().t - dt, o.rate_hz);
    grid.count = std::min(by_devices, by_truth);
    if (grid.count < o.window) continue;
    std::vector<ImuStream> resampled;
    for (const auto& dev : pieces) {
      const auto it = std::find_if(dev.begin(), dev.end(), [&](const ImuStream& p) {
        return p.front().t <= grid.t0 + kTimeTol && p.back().t >= grid.at(grid.count - 1) - kTimeTol;
      });
      if (it == dev.end()) throw DataError("ingest: internal error locating a gap-free piece");
      resampled.push_back(resample_on(*it, grid));
    }
    auto windows = make_windows(resampled, grid, truth, o.window, o.stride, sequence_index);
    seq.windows.insert(seq.windows.end(), std::make_move_iterator(windows.begin()),
                       std::make_move_iterator(windows.end()));
    seq.segments.push_back(std::move(resampled));
    seq.grids.push_back(grid);
  }
  if (seq.windows.empty()) {
    throw DataError("ingest: sequence '" + manifest.sequence_id + "' has no gap-free span of " +
                    std::to_string(o.window) + " samples");
  }
  seq.truth = std::move(truth);
  return seq;
}

IngestedSequence ingest_sequence(const std::filesystem::path& manifest_path, const IngestOptions& o,
                                 std::size_t sequence_index) {
  SequenceManifest m = read_manifest(manifest_path);
  std::vector<ImuStream> streams;
  for (const auto& d : m.devices) streams.push_back(load_stream(d.path));
  PoseStream truth = load_truth(m.truth_path);
  return ingest_streams(m, std::move(streams), std::move(truth), o, sequence_index);
}

}  // namespace suitein::dataio
