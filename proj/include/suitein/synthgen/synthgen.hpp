// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-device walking sequences. The torso follows a planar path
// driven by piecewise-linear speed and heading profiles with a periodic gait
// surge; every device sees the torso kinematics plus its own zero-mean
// oscillation, a constant bias and white noise, all in the global frame.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "suitein/dataio/types.hpp"

namespace suitein::synthgen {

struct Knot {
  double t = 0.0;
  double value = 0.0;
};

/// Piecewise-linear profile, held constant outside its knots.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<Knot> knots);

  double value(double t) const;
  /// Right derivative.
  double slope(double t) const;
  /// Integral of the profile over [a, b] (exact).
  double integral(double a, double b) const;
  const std::vector<Knot>& knots() const { return knots_; }

 private:
  std::vector<Knot> knots_;
};

/// Oscillation amplitude switch: from `t` on, amplitude and direction change.
/// Switch instants are snapped so the oscillation velocity stays continuous.
struct OscillationRegime {
  double t = 0.0;
  double amplitude = 0.0;        // m/s^2
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();
};

struct DevicePerturbation {
  std::string name;
  double rate_hz = 100.0;
  double osc_amplitude = 0.0;    // m/s^2
  double osc_frequency_hz = 1.9;
  double osc_phase = 0.0;        // rad
  Eigen::Vector3d osc_direction = Eigen::Vector3d::UnitX();
  std::vector<OscillationRegime> regimes;
  double gyro_osc_amplitude = 0.0;  // rad/s
  Eigen::Vector3d gyro_osc_axis = Eigen::Vector3d::UnitX();
  double sigma_accel = 0.05;     // m/s^2
  double sigma_gyro = 0.005;     // rad/s
  /// Per-sequence constant biases are drawn uniformly from +-these bounds.
  double accel_bias_bound = 0.02;
  double gyro_bias_bound = 0.002;
};

struct RemovalEvent {
  std::size_t device = 0;
  double t = 0.0;
};

/// Zero-speed interval with an optional vertical posture dip (sit, squat).
struct StopInterval {
  double t_begin = 0.0;
  double t_end = 0.0;
  double posture_depth = 0.0;   // m
  double posture_period = 1.5;  // s
};

struct MotionScript {
  double duration = 60.0;
  dataio::WalkingMode mode = dataio::WalkingMode::SYN;
  PiecewiseLinear speed;    // m/s
  PiecewiseLinear heading;  // rad
  double gait_surge = 0.0;  // relative amplitude of the stride speed ripple
  double cadence_hz = 1.8;
  double initial_x = 0.0, initial_y = 0.0;
  std::vector<double> jump_times;
  double jump_height = 0.15;  // m
  double jump_period = 0.4;   // s
  std::vector<StopInterval> stops;
  std::vector<RemovalEvent> removals;
  std::vector<DevicePerturbation> devices;
  double truth_rate_hz = 100.0;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
  /// Profile knot times, jump and stop edges, regime switches, removals.
  std::vector<double> breakpoints() const;
};

/// Mode presets. The seed draws the path (speed and heading knots), event
/// times and oscillation directions; generate() draws biases and noise.
///   STW  low oscillation on all devices, no events
///   PVW  phone amplitude switches between 0.3 and 2.5 m/s^2 at random times
///   MVW  all oscillation amplitudes raised
///   DRW  one device is removed (rest + noise) at a random time
///   DLW  one or two stop intervals with posture dips
MotionScript preset(dataio::WalkingMode mode, std::uint64_t seed = 0, double duration = 60.0);

struct KinematicState {
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
  double heading = 0.0;
  double yaw_rate = 0.0;
};

/// Torso kinematics at t (no device oscillation). Vertical motion is the jump
/// and posture profile.
KinematicState kinematics(const MotionScript& script, double t);
/// Torso position, integrated from the profiles.
Eigen::Vector3d position(const MotionScript& script, double t);

/// Device oscillation acceleration and its zero-mean velocity.
Eigen::Vector3d oscillation_acceleration(const MotionScript& script, std::size_t device, double t);
Eigen::Vector3d oscillation_velocity(const MotionScript& script, std::size_t device, double t);
/// Net oscillation displacement over [a, b]: exact, bounded by 2 A_max / w^2
/// within one regime.
Eigen::Vector3d oscillation_displacement(const MotionScript& script, std::size_t device, double a,
                                         double b);

struct SyntheticSequence {
  std::vector<dataio::ImuStream> devices;
  dataio::PoseStream truth;
  dataio::SequenceManifest manifest;
};

SyntheticSequence generate(const MotionScript& script, std::uint64_t seed,
                           const std::string& sequence_id = "syn", const std::string& subject_id = "s0");

/// Writes <dir>/manifest.yaml, <dir>/truth.csv and <dir>/<device>.csv.
/// Returns the manifest path.
std::filesystem::path write_sequence(const SyntheticSequence& seq, const std::filesystem::path& dir);

}  // namespace suitein::synthgen
