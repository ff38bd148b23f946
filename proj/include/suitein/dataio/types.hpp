// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace suitein::dataio {

struct ImuSample {
  double t = 0.0;                                 // s
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // m/s^2, gravity compensated
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();   // rad/s
};
using ImuStream = std::vector<ImuSample>;

struct PoseSample {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // m
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};
using PoseStream = std::vector<PoseSample>;

enum class WalkingMode { STW, PVW, MVW, DRW, DLW, HD, MP, PK, BG, SYN };

std::string_view to_string(WalkingMode mode);
/// Throws ConfigError for an unknown tag.
WalkingMode parse_walking_mode(std::string_view tag);
/// The five scripted modes the simulator knows presets for.
inline constexpr std::array<WalkingMode, 5> kSimulatedModes{
    WalkingMode::STW, WalkingMode::PVW, WalkingMode::MVW, WalkingMode::DRW, WalkingMode::DLW};

/// One window of J synchronised device streams.
struct DeviceWindow {
  /// J blocks, each L rows of [ax ay az gx gy gz] (row-major, L*6 values).
  std::vector<std::vector<double>> device_data;
  std::size_t length = 0;  // L
  double t_start = 0.0;
  double duration = 0.0;
  std::array<double, 2> v_label{0.0, 0.0};  // m/s, horizontal
  std::size_t sequence_index = 0;
};

struct DeviceEntry {
  std::string name;
  std::filesystem::path path;
  double rate_hz = 0.0;
  /// Device-to-global rotation at the first sample; identity when the log is
  /// already in the global frame.
  Eigen::Quaterniond initial_rotation = Eigen::Quaterniond::Identity();
};

struct SequenceManifest {
  static constexpr int kSchemaVersion = 1;

  std::string sequence_id;
  std::string subject_id;
  WalkingMode mode = WalkingMode::SYN;
  std::vector<DeviceEntry> devices;
  std::filesystem::path truth_path;
  double truth_rate_hz = 0.0;
  double duration = 0.0;
};

}  // namespace suitein::dataio
