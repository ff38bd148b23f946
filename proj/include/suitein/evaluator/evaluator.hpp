// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "suitein/dataio/pipeline.hpp"
#include "suitein/model/model.hpp"

namespace suitein::evaluator {

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> p;
  /// Both trajectories of a comparison start from the known y0; no alignment.
  std::string origin = "shared-y0";

  std::size_t size() const { return t.size(); }
  /// Throws DataError unless timestamps strictly increase and positions are finite.
  void validate() const;
};

/// Window i's velocity applies from its start to the next start; the last one
/// runs to `last_end`. Throws DataError on unordered windows.
Trajectory integrate_trajectory(std::span<const Eigen::Vector2d> velocities, std::span<const double> window_starts,
                                double last_end, const Eigen::Vector2d& y0);

/// Truth positions (x, y) interpolated at `times`.
Trajectory sample_truth(const dataio::PoseStream& truth, std::span<const double> times);
/// Zero-order hold of `traj` at `times`; times before the first sample take p[0].
Trajectory hold_resample(const Trajectory& traj, std::span<const double> times);

/// Root-mean-square pointwise error. The truth is linearly interpolated at the
/// predicted timestamps inside its span. Throws DataError without overlap.
double ate(const Trajectory& predicted, const Trajectory& truth);

struct RteResult {
  double value = 0.0;
  /// The trajectories were shorter than one interval; one truncated interval
  /// from the first sample was used.
  bool truncated = false;
  std::size_t intervals = 0;
};

/// For each start sample, both trajectories are re-anchored there and the RMS
/// displacement error over [start, start + interval] is taken; the result is
/// the mean over all starts whose interval fits.
RteResult rte(const Trajectory& predicted, const Trajectory& truth, double interval = 60.0);

/// Empirical CDF of pointwise errors: (error, fraction <= error) per distinct
/// error value, ascending, last probability exactly 1.
std::vector<std::pair<double, double>> error_cdf(const Trajectory& predicted, const Trajectory& truth);
/// Pointwise Euclidean errors at the predicted timestamps.
std::vector<double> pointwise_errors(const Trajectory& predicted, const Trajectory& truth);

struct PdrOptions {
  double step_length = 0.67;
  double cutoff_hz = 3.0;
  double min_step_interval = 0.3;
  double threshold = 0.15;    // above the moving mean, m/s^2
  double mean_window_s = 1.0; // moving-mean width, also the minimum stream length
  double initial_heading = 0.0;
};

struct PdrResult {
  Trajectory trajectory;  // start, one point per step, stream end
  std::vector<double> step_times;
};

/// Step counting on the low-passed acceleration magnitude with heading from
/// integrated gyro z. `phone` must be uniformly sampled and gravity-free.
PdrResult pdr_baseline(const dataio::ImuStream& phone, const PdrOptions& options = {},
                       const Eigen::Vector2d& y0 = Eigen::Vector2d::Zero());

// ------------------------------------------------------------ model runs

struct SequenceEvaluation {
  std::vector<double> window_starts;
  std::vector<Eigen::Vector2d> velocities;  // predicted per window
  Trajectory predicted, truth, zero_velocity;
  std::optional<Trajectory> pdr;
};

struct EvalOptions {
  bool with_pdr = false;
  std::size_t batch_size = 256;
  PdrOptions pdr;
};

/// Predicts every window of `seq`, integrates from the truth position at the
/// first window start, and builds the comparison trajectories.
SequenceEvaluation evaluate_sequence(model::SuiteInModel& model, const dataio::IngestedSequence& seq,
                                     const EvalOptions& options = {});

struct MetricsRow {
  std::string sequence_id;
  std::string mode;
  std::string method;
  double ate = 0.0;
  double rte = 0.0;
  bool rte_truncated = false;
};

struct MetricsReport {
  double rte_interval = 60.0;
  std::vector<MetricsRow> rows;
  std::vector<std::pair<double, double>> cdf;  // pooled errors of the "model" rows

  void add(const std::string& id, const std::string& mode, const std::string& method, const Trajectory& predicted,
           const Trajectory& truth);
  /// Mean ATE over rows of `method` (NaN when there are none).
  double mean_ate(const std::string& method) const;
  double mean_rte(const std::string& method) const;

  /// id,mode,method,ate,rte,rte_truncated
  std::string to_csv() const;
  /// Structured summary: overall and per-mode means per method, then rows.
  std::string to_yaml() const;
};

/// Rows "model" and "zero-velocity" (plus "pdr" when requested) for every
/// listed sequence; the CDF pools the model errors.
MetricsReport evaluate_sequences(model::SuiteInModel& model, const std::vector<dataio::IngestedSequence>& sequences,
                                 const std::vector<std::size_t>& indices, const EvalOptions& options = {},
                                 double rte_interval = 60.0);

std::vector<std::pair<double, double>> cdf_of(std::vector<double> errors);
/// error_m,probability
std::string cdf_csv(const std::vector<std::pair<double, double>>& cdf);

}  // namespace suitein::evaluator
