// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "suitein/dataio/types.hpp"

namespace suitein::dataio {

/// Uniform grid t0 + k / rate_hz for k in [0, count).
struct TimeGrid {
  double t0 = 0.0;
  double rate_hz = 25.0;
  std::size_t count = 0;

  double at(std::size_t k) const { return t0 + static_cast<double>(k) / rate_hz; }
  double period() const { return 1.0 / rate_hz; }
};

/// Linear interpolation of `stream` at the grid points. Every grid point must
/// lie inside the stream's time span.
ImuStream resample_on(const ImuStream& stream, const TimeGrid& grid);

/// Resamples onto the grid starting at the first sample and ending at or
/// before the last one. Throws DataError on an empty stream and ConfigError if
/// rate_hz exceeds the stream's native rate.
ImuStream resample(const ImuStream& stream, double rate_hz);

/// Position of the truth trajectory at time t (linear interpolation).
Eigen::Vector3d interpolate_position(const PoseStream& truth, double t);

/// Splits a stream at gaps longer than `max_gap` seconds; shorter gaps are
/// filled by repeating the last sample on a grid of `nominal_period`.
std::vector<ImuStream> fill_gaps(const ImuStream& stream, double nominal_period,
                                 double max_gap = 0.5);

/// Rotates accel and gyro by `rotation`. Throws ConfigError unless R Rᵀ = I
/// within 1e-9 and det R = +1.
ImuStream project_to_global(const ImuStream& stream, const Eigen::Matrix3d& rotation);

/// Applies t <- t + offset.
ImuStream shift_time(const ImuStream& stream, double offset);

struct AlignOptions {
  double grid_rate_hz = 100.0;
  double max_lag = 2.0;  // s
  /// A sample is part of a spike when |a_z| exceeds this fraction of the
  /// stream's peak |a_z|.
  double spike_fraction = 0.5;
  /// ... and at least this many m/s^2, so a quiet stream shows no spikes.
  double min_spike_accel = 4.0;
  /// Peaks closer than this are one spike.
  double min_spike_separation = 0.15;
  std::size_t min_spikes = 3;
};

/// Counts vertical-acceleration spikes (used for the >= 3 precondition).
std::size_t count_vertical_spikes(const ImuStream& stream, const AlignOptions& options = {});

/// For every stream returns the offset to add to its timestamps so that its
/// vertical-acceleration spike train lines up with the truth's vertical
/// acceleration. Throws DataError naming the detected spike count when a
/// stream or the truth shows fewer than options.min_spikes spikes.
std::vector<double> align_by_jumps(const std::vector<ImuStream>& streams, const PoseStream& truth,
                                   const AlignOptions& options = {});

/// Windows of `window` grid samples every `stride` samples. Sample k is taken
/// to cover [t_k, t_k + 1/rate), so a window starting at t_s spans
/// duration = window / rate and its label is
///   (p_xy(t_s + duration) - p_xy(t_s)) / duration.
/// The streams must already share the same grid.
std::vector<DeviceWindow> make_windows(const std::vector<ImuStream>& streams, const TimeGrid& grid,
                                       const PoseStream& truth, std::size_t window,
                                       std::size_t stride, std::size_t sequence_index = 0);

struct IngestOptions {
  double rate_hz = 25.0;
  std::size_t window = 100;
  std::size_t stride = 10;
  double max_gap = 0.5;
  bool align = true;
  AlignOptions align_options;
};

struct IngestedSequence {
  SequenceManifest manifest;
  std::vector<double> offsets;  // per device, seconds
  /// One entry per gap-free segment: J streams resampled onto `grids[s]`.
  std::vector<std::vector<ImuStream>> segments;
  std::vector<TimeGrid> grids;
  PoseStream truth;
  std::vector<DeviceWindow> windows;
};

/// Manifest -> aligned, projected, resampled and windowed sequence.
IngestedSequence ingest_sequence(const std::filesystem::path& manifest_path,
                                 const IngestOptions& options, std::size_t sequence_index = 0);

/// Same, starting from streams already in memory.
IngestedSequence ingest_streams(const SequenceManifest& manifest, std::vector<ImuStream> streams,
                                PoseStream truth, const IngestOptions& options,
                                std::size_t sequence_index = 0);

}  // namespace suitein::dataio
