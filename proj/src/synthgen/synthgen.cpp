// SPDX-License-Identifier: Apache-2.0
#include "suitein/synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "suitein/common/error.hpp"
#include "suitein/dataio/io.hpp"

namespace suitein::synthgen {

namespace {

using std::numbers::pi;
using dataio::WalkingMode;

// 5-point Gauss-Legendre on [-1, 1].
constexpr double kGlNodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                0.9061798459386640};
constexpr double kGlWeights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                  0.4786286704993665, 0.2369268850561891};
constexpr double kMaxPanel = 0.02;  // s

double omega(const DevicePerturbation& d) { return 2.0 * pi * d.osc_frequency_hz; }

struct Regime {
  double amplitude;
  Eigen::Vector3d direction;
};

Regime regime_at(const DevicePerturbation& d, double t) {
  Regime r{d.osc_amplitude, d.osc_direction};
  for (const auto& g : d.regimes) {
    if (t >= g.t) r = {g.amplitude, g.direction};
  }
  return r;
}

Eigen::Vector2d horizontal_velocity(const MotionScript& s, double t) {
  const KinematicState k = kinematics(s, t);
  return k.velocity.head<2>();
}

// Integral of the horizontal velocity over [a, b] where no breakpoint lies
// strictly inside.
Eigen::Vector2d integrate_smooth(const MotionScript& s, double a, double b) {
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  if (b <= a) return acc;
  const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / kMaxPanel)));
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + h * p;
    const double mid = lo + 0.5 * h;
    for (int i = 0; i < 5; ++i) {
      acc += kGlWeights[i] * 0.5 * h * horizontal_velocity(s, mid + 0.5 * h * kGlNodes[i]);
    }
  }
  return acc;
}

// Integral over [a, b] split at breakpoints.
Eigen::Vector2d integrate_velocity(const MotionScript& s, const std::vector<double>& breaks, double a,
                                   double b) {
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double lo = a;
  auto it = std::upper_bound(breaks.begin(), breaks.end(), a);
  for (; it != breaks.end() && *it < b; ++it) {
    acc += integrate_smooth(s, lo, *it);
    lo = *it;
  }
  acc += integrate_smooth(s, lo, b);
  return acc;
}

struct Vertical {
  double z = 0.0, dz = 0.0, ddz = 0.0;
};

Vertical vertical(const MotionScript& s, double t) {
  Vertical v;
  for (double tj : s.jump_times) {
    if (t < tj || t > tj + s.jump_period) continue;
    const double w = 2.0 * pi / s.jump_period;
    const double ph = w * (t - tj);
    v.z += 0.5 * s.jump_height * (1.0 - std::cos(ph));
    v.dz += 0.5 * s.jump_height * w * std::sin(ph);
    v.ddz += 0.5 * s.jump_height * w * w * std::cos(ph);
  }
  for (const auto& st : s.stops) {
    if (st.posture_depth == 0.0) continue;
    const double c0 = 0.5 * (st.t_begin + st.t_end) - 0.5 * st.posture_period;
    if (t < c0 || t > c0 + st.posture_period) continue;
    const double w = 2.0 * pi / st.posture_period;
    const double ph = w * (t - c0);
    v.z -= 0.5 * st.posture_depth * (1.0 - std::cos(ph));
    v.dz -= 0.5 * st.posture_depth * w * std::sin(ph);
    v.ddz -= 0.5 * st.posture_depth * w * w * std::cos(ph);
  }
  return v;
}

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d = {n(rng), n(rng), n(rng)};
  } while (d.norm() < 1e-3);
  return d.normalized();
}

double snap_to_velocity_zero(double t, const DevicePerturbation& d) {
  const double w = omega(d);
  const double k = std::round((w * t + d.osc_phase - 0.5 * pi) / pi);
  return (0.5 * pi + k * pi - d.osc_phase) / w;
}

bool removed(const MotionScript& s, std::size_t device, double t) {
  for (const auto& r : s.removals) {
    if (r.device == device && t >= r.t) return true;
  }
  return false;
}

}  // namespace

// ------------------------------------------------------------ PiecewiseLinear

PiecewiseLinear::PiecewiseLinear(std::vector<Knot> knots) : knots_(std::move(knots)) {
  if (knots_.empty()) throw ConfigError("piecewise-linear profile needs at least one knot");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].t > knots_[i - 1].t)) {
      throw ConfigError("piecewise-linear knots must have strictly increasing times");
    }
  }
}

double PiecewiseLinear::value(double t) const {
  if (knots_.empty()) return 0.0;
  if (t <= knots_.front().t) return knots_.front().value;
  if (t >= knots_.back().t) return knots_.back().value;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                             [](double v, const Knot& k) { return v < k.t; });
  const Knot& b = *it;
  const Knot& a = *(it - 1);
  return a.value + (b.value - a.value) * (t - a.t) / (b.t - a.t);
}

double PiecewiseLinear::slope(double t) const {
  if (knots_.size() < 2 || t < knots_.front().t || t >= knots_.back().t) return 0.0;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                             [](double v, const Knot& k) { return v < k.t; });
  const Knot& b = *it;
  const Knot& a = *(it - 1);
  return (b.value - a.value) / (b.t - a.t);
}

double PiecewiseLinear::integral(double a, double b) const {
  if (b < a) return -integral(b, a);
  std::vector<double> pts{a};
  for (const auto& k : knots_) {
    if (k.t > a && k.t < b) pts.push_back(k.t);
  }
  pts.push_back(b);
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    acc += 0.5 * (value(pts[i - 1]) + value(pts[i])) * (pts[i] - pts[i - 1]);
  }
  return acc;
}

// --------------------------------------------------------------- MotionScript

void MotionScript::validate() const {
  if (!(duration > 0.0)) throw ConfigError("motion script: duration must be > 0");
  if (!(truth_rate_hz >= 25.0)) throw ConfigError("motion script: truth rate must be >= 25 Hz");
  if (!(cadence_hz > 0.0)) throw ConfigError("motion script: cadence must be > 0");
  if (gait_surge < 0.0 || gait_surge >= 0.5) throw ConfigError("motion script: gait_surge must be in [0, 0.5)");
  if (speed.knots().empty() || heading.knots().empty()) {
    throw ConfigError("motion script: speed and heading profiles need knots");
  }
  for (const auto& k : speed.knots()) {
    if (k.value < 0.0) throw ConfigError("motion script: negative speed knot");
  }
  if (devices.empty()) throw ConfigError("motion script: no devices");
  for (const auto& d : devices) {
    if (d.name.empty()) throw ConfigError("motion script: unnamed device");
    if (!(d.rate_hz > 0.0)) throw ConfigError("motion script: device '" + d.name + "' needs a positive rate");
    if (d.sigma_accel < 0.0 || d.sigma_gyro < 0.0 || d.accel_bias_bound < 0.0 || d.gyro_bias_bound < 0.0) {
      throw ConfigError("motion script: device '" + d.name + "' has a negative noise or bias bound");
    }
    if (d.osc_amplitude < 0.0 || !(d.osc_frequency_hz > 0.0)) {
      throw ConfigError("motion script: device '" + d.name + "' has an invalid oscillation");
    }
    double last = -1.0;
    for (const auto& r : d.regimes) {
      if (r.t < 0.0 || r.t > duration || r.t <= last || r.amplitude < 0.0) {
        throw ConfigError("motion script: device '" + d.name + "' has an invalid oscillation regime");
      }
      if (std::abs(std::cos(omega(d) * r.t + d.osc_phase)) > 1e-6) {
        throw ConfigError("motion script: regime switch of '" + d.name +
                          "' is not at a zero of the oscillation velocity");
      }
      last = r.t;
    }
  }
  for (double tj : jump_times) {
    if (tj < 0.0 || tj + jump_period > duration) throw ConfigError("motion script: jump outside [0, duration]");
  }
  for (const auto& st : stops) {
    if (st.t_begin < 0.0 || st.t_end > duration || !(st.t_end > st.t_begin)) {
      throw ConfigError("motion script: stop interval outside [0, duration]");
    }
    if (st.posture_depth != 0.0 && st.posture_period > st.t_end - st.t_begin) {
      throw ConfigError("motion script: posture transient longer than its stop interval");
    }
    for (double t : {st.t_begin, 0.5 * (st.t_begin + st.t_end), st.t_end}) {
      if (speed.value(t) != 0.0) throw ConfigError("motion script: speed is not zero inside a stop interval");
    }
    for (const auto& k : speed.knots()) {
      if (k.t > st.t_begin && k.t < st.t_end && k.value != 0.0) {
        throw ConfigError("motion script: speed is not zero inside a stop interval");
      }
    }
  }
  for (const auto& r : removals) {
    if (r.device >= devices.size()) throw ConfigError("motion script: removal names an unknown device");
    if (r.t < 0.0 || r.t > duration) throw ConfigError("motion script: removal outside [0, duration]");
  }
}

std::vector<double> MotionScript::breakpoints() const {
  std::vector<double> b;
  for (const auto& k : speed.knots()) b.push_back(k.t);
  for (const auto& k : heading.knots()) b.push_back(k.t);
  for (double tj : jump_times) {
    b.push_back(tj);
    b.push_back(tj + jump_period);
  }
  for (const auto& st : stops) {
    const double c0 = 0.5 * (st.t_begin + st.t_end) - 0.5 * st.posture_period;
    b.insert(b.end(), {st.t_begin, st.t_end, c0, c0 + st.posture_period});
  }
  for (const auto& d : devices) {
    for (const auto& r : d.regimes) b.push_back(r.t);
  }
  for (const auto& r : removals) b.push_back(r.t);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

// ----------------------------------------------------------------- kinematics

KinematicState kinematics(const MotionScript& s, double t) {
  KinematicState k;
  const double sp = s.speed.value(t);
  const double dsp = s.speed.slope(t);
  k.heading = s.heading.value(t);
  k.yaw_rate = s.heading.slope(t);
  const double wc = 2.0 * pi * s.cadence_hz;
  const double ph = wc * t;
  const double g = 1.0 + s.gait_surge * (std::sin(ph) + 0.25 * std::sin(2.0 * ph));
  const double dg = s.gait_surge * wc * (std::cos(ph) + 0.5 * std::cos(2.0 * ph));
  const double m = sp * g;
  const double dm = dsp * g + sp * dg;
  const Eigen::Vector2d u(std::cos(k.heading), std::sin(k.heading));
  const Eigen::Vector2d n(-u.y(), u.x());
  const Vertical v = vertical(s, t);
  k.velocity << m * u, v.dz;
  const Eigen::Vector2d a = dm * u + m * k.yaw_rate * n;
  k.acceleration << a, v.ddz;
  return k;
}

Eigen::Vector3d position(const MotionScript& s, double t) {
  const auto breaks = s.breakpoints();
  const Eigen::Vector2d xy = Eigen::Vector2d(s.initial_x, s.initial_y) + integrate_velocity(s, breaks, 0.0, t);
  return {xy.x(), xy.y(), vertical(s, t).z};
}

Eigen::Vector3d oscillation_acceleration(const MotionScript& s, std::size_t device, double t) {
  const auto& d = s.devices.at(device);
  const Regime r = regime_at(d, t);
  return r.amplitude * std::sin(omega(d) * t + d.osc_phase) * r.direction;
}

Eigen::Vector3d oscillation_velocity(const MotionScript& s, std::size_t device, double t) {
  const auto& d = s.devices.at(device);
  const Regime r = regime_at(d, t);
  return -r.amplitude / omega(d) * std::cos(omega(d) * t + d.osc_phase) * r.direction;
}

Eigen::Vector3d oscillation_displacement(const MotionScript& s, std::size_t device, double a, double b) {
  const auto& d = s.devices.at(device);
  const double w = omega(d);
  std::vector<double> cuts{a};
  for (const auto& r : d.regimes) {
    if (r.t > a && r.t < b) cuts.push_back(r.t);
  }
  cuts.push_back(b);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const Regime r = regime_at(d, cuts[i - 1]);
    acc -= r.amplitude / (w * w) *
           (std::sin(w * cuts[i] + d.osc_phase) - std::sin(w * cuts[i - 1] + d.osc_phase)) * r.direction;
  }
  return acc;
}

// -------------------------------------------------------------------- presets

MotionScript preset(WalkingMode mode, std::uint64_t seed, double duration) {
  if (std::find(dataio::kSimulatedModes.begin(), dataio::kSimulatedModes.end(), mode) ==
      dataio::kSimulatedModes.end()) {
    throw ConfigError("no simulator preset for walking mode '" + std::string(dataio::to_string(mode)) +
                      "' (expected STW, PVW, MVW, DRW or DLW)");
  }
  if (duration < 20.0) throw ConfigError("preset: duration must be at least 20 s");

  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(mode) + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  MotionScript s;
  s.duration = duration;
  s.mode = mode;
  s.gait_surge = 0.12;
  s.cadence_hz = uniform(1.7, 2.0);

  // Triple jump at both ends; walking in between.
  s.jump_times = {0.5, 1.2, 1.9, duration - 2.7, duration - 2.0, duration - 1.3};
  const double walk_begin = 3.0, walk_end = duration - 3.5;

  // Stop intervals (DLW only).
  if (mode == WalkingMode::DLW) {
    const int count = duration >= 45.0 ? 2 : 1;
    const double span = (walk_end - walk_begin) / count;
    for (int i = 0; i < count; ++i) {
      const double centre = walk_begin + span * (i + 0.5) + uniform(-0.15, 0.15) * span;
      const double hold = uniform(3.0, 5.0);
      const double depth = unit(rng) < 0.5 ? 0.45 : 0.55;  // sit, squat
      s.stops.push_back({centre - 0.5 * hold, centre + 0.5 * hold, depth, 1.5});
    }
  }

  // Speed: walking spans between stops, each ramping up from and down to 0.
  std::vector<std::pair<double, double>> spans;
  double cursor = walk_begin;
  for (const auto& st : s.stops) {
    spans.emplace_back(cursor, st.t_begin);
    cursor = st.t_end;
  }
  spans.emplace_back(cursor, walk_end);
  std::vector<Knot> speed{{0.0, 0.0}};
  for (const auto& [a, b] : spans) {
    if (speed.back().t < a) speed.push_back({a, 0.0});
    double t = a + 1.0;
    while (t < b - 1.0) {
      speed.push_back({t, uniform(0.9, 1.7)});
      t += uniform(3.0, 7.0);
    }
    if (speed.back().t < b - 1.0 - 1e-9) speed.push_back({b - 1.0, uniform(0.9, 1.7)});
    speed.push_back({b, 0.0});
  }
  speed.push_back({duration, 0.0});
  s.speed = PiecewiseLinear(std::move(speed));

  // Heading: holds separated by turns of up to +-90 degrees.
  std::vector<Knot> heading{{0.0, uniform(0.0, 2.0 * pi)}};
  double t = walk_begin + uniform(1.0, 4.0);
  while (t < walk_end - 1.0) {
    const double turn = uniform(1.0, 2.5);
    const double next = heading.back().value + uniform(-0.5 * pi, 0.5 * pi);
    heading.push_back({t, heading.back().value});
    heading.push_back({t + turn, next});
    t += turn + uniform(3.0, 8.0);
  }
  s.heading = PiecewiseLinear(std::move(heading));

  // Devices: phone, watch, earbuds.
  const double gain = mode == WalkingMode::MVW ? 1.8 : 1.0;
  struct Base {
    const char* name;
    double rate, amp, gyro_amp;
  };
  const Base bases[3] = {{"phone", 100.0, 0.3, 0.2}, {"watch", 100.0, 2.0, 1.0}, {"earbuds", 25.0, 0.5, 0.1}};
  for (const auto& b : bases) {
    DevicePerturbation d;
    d.name = b.name;
    d.rate_hz = b.rate;
    d.osc_amplitude = b.amp * gain;
    d.osc_frequency_hz = 1.9;
    d.osc_phase = uniform(0.0, 2.0 * pi);
    d.osc_direction = random_direction(rng);
    d.gyro_osc_amplitude = b.gyro_amp * gain;
    d.gyro_osc_axis = random_direction(rng);
    s.devices.push_back(d);
  }
  if (mode == WalkingMode::PVW) {
    auto& phone = s.devices[0];
    const int switches = 3 + static_cast<int>(unit(rng) * 3.0);
    std::vector<double> times;
    for (int i = 0; i < switches; ++i) times.push_back(uniform(5.0, duration - 5.0));
    std::sort(times.begin(), times.end());
    bool high = false;
    double last = -1.0;
    for (double ts : times) {
      const double snapped = snap_to_velocity_zero(ts, phone);
      if (snapped <= last + 0.5 || snapped < 0.0 || snapped > duration) continue;
      high = !high;
      phone.regimes.push_back({snapped, high ? 2.5 : 0.3, random_direction(rng)});
      last = snapped;
    }
  }
  if (mode == WalkingMode::DRW) {
    const auto device = static_cast<std::size_t>(unit(rng) * 3.0) % 3;
    s.removals.push_back({device, uniform(0.35 * duration, 0.65 * duration)});
  }
  s.validate();
  return s;
}

// ------------------------------------------------------------------- generate

SyntheticSequence generate(const MotionScript& s, std::uint64_t seed, const std::string& sequence_id,
                           const std::string& subject_id) {
  s.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const std::size_t J = s.devices.size();
  std::vector<Eigen::Vector3d> accel_bias(J), gyro_bias(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& d = s.devices[j];
    accel_bias[j] = {sym(rng) * d.accel_bias_bound, sym(rng) * d.accel_bias_bound, sym(rng) * d.accel_bias_bound};
    gyro_bias[j] = {sym(rng) * d.gyro_bias_bound, sym(rng) * d.gyro_bias_bound, sym(rng) * d.gyro_bias_bound};
  }

  SyntheticSequence out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < J; ++j) {
    const auto& d = s.devices[j];
    const auto n = static_cast<std::size_t>(std::floor(s.duration * d.rate_hz + 1e-9)) + 1;
    const double w = omega(d);
    dataio::ImuStream stream;
    stream.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      dataio::ImuSample x;
      x.t = static_cast<double>(k) / d.rate_hz;
      if (!removed(s, j, x.t)) {
        const KinematicState kin = kinematics(s, x.t);
        x.accel = kin.acceleration + oscillation_acceleration(s, j, x.t);
        x.gyro = Eigen::Vector3d(0.0, 0.0, kin.yaw_rate) +
                 d.gyro_osc_amplitude * std::sin(w * x.t + d.osc_phase + 0.7) * d.gyro_osc_axis;
      }
      x.accel += accel_bias[j];
      x.gyro += gyro_bias[j];
      if (d.sigma_accel > 0.0) {
        for (int c = 0; c < 3; ++c) x.accel[c] += d.sigma_accel * gauss(rng);
      }
      if (d.sigma_gyro > 0.0) {
        for (int c = 0; c < 3; ++c) x.gyro[c] += d.sigma_gyro * gauss(rng);
      }
      stream.push_back(x);
    }
    out.devices.push_back(std::move(stream));
  }

  const auto breaks = s.breakpoints();
  const auto n = static_cast<std::size_t>(std::floor(s.duration * s.truth_rate_hz + 1e-9)) + 1;
  Eigen::Vector2d xy(s.initial_x, s.initial_y);
  double prev = 0.0;
  out.truth.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / s.truth_rate_hz;
    xy += integrate_velocity(s, breaks, prev, t);
    prev = t;
    dataio::PoseSample p;
    p.t = t;
    p.position = {xy.x(), xy.y(), vertical(s, t).z};
    p.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(s.heading.value(t), Eigen::Vector3d::UnitZ()));
    out.truth.push_back(p);
  }

  auto& m = out.manifest;
  m.sequence_id = sequence_id;
  m.subject_id = subject_id;
  m.mode = s.mode;
  m.duration = s.duration;
  m.truth_path = "truth.csv";
  m.truth_rate_hz = s.truth_rate_hz;
  for (const auto& d : s.devices) {
    dataio::DeviceEntry e;
    e.name = d.name;
    e.path = d.name + ".csv";
    e.rate_hz = d.rate_hz;
    m.devices.push_back(e);
  }
  return out;
}

std::filesystem::path write_sequence(const SyntheticSequence& seq, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
  dataio::SequenceManifest m = seq.manifest;
  for (std::size_t j = 0; j < m.devices.size(); ++j) {
    m.devices[j].path = dir / m.devices[j].path.filename();
    dataio::write_stream(m.devices[j].path, seq.devices[j]);
  }
  m.truth_path = dir / m.truth_path.filename();
  dataio::write_truth(m.truth_path, seq.truth);
  const auto manifest_path = dir / "manifest.yaml";
  dataio::write_manifest(manifest_path, m);
  return manifest_path;
}

}  // namespace suitein::synthgen
