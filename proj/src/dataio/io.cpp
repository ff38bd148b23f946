// SPDX-License-Identifier: Apache-2.0
#include "suitein/dataio/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "suitein/common/error.hpp"

namespace suitein::dataio {

namespace {

constexpr std::string_view kStreamHeader = "t,ax,ay,az,gx,gy,gz";
constexpr std::string_view kTruthHeader = "t,px,py,pz,qw,qx,qy,qz";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

template <std::size_t N>
std::array<double, N> parse_row(std::string_view line, const std::filesystem::path& path,
                                std::size_t line_no) {
  std::array<double, N> out{};
  std::size_t field = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    const std::string_view token =
        trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (field >= N) {
      throw ParseError(path.string(), line_no, "expected " + std::to_string(N) + " fields, found more");
    }
    double v = 0.0;
    const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || end != token.data() + token.size() || token.empty()) {
      throw ParseError(path.string(), line_no,
                       "field " + std::to_string(field + 1) + " is not a number: '" +
                           std::string(token) + "'");
    }
    if (!std::isfinite(v)) {
      throw ParseError(path.string(), line_no, "field " + std::to_string(field + 1) + " is not finite");
    }
    out[field++] = v;
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (field != N) {
    throw ParseError(path.string(), line_no,
                     "expected " + std::to_string(N) + " fields, found " + std::to_string(field));
  }
  return out;
}

template <std::size_t N, typename Fn>
void read_csv(const std::filesystem::path& path, std::string_view header, Fn&& on_row) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  double last_t = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    if (!have_header) {
      if (row != header) {
        throw ParseError(path.string(), line_no,
                         "expected header '" + std::string(header) + "', found '" + std::string(row) + "'");
      }
      have_header = true;
      continue;
    }
    const auto values = parse_row<N>(row, path, line_no);
    if (!first && !(values[0] > last_t)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": timestamp " +
                      std::to_string(values[0]) + " is not after the previous " +
                      std::to_string(last_t) + " (timestamps must be strictly increasing)");
    }
    first = false;
    last_t = values[0];
    on_row(values);
  }
  if (!have_header) throw ParseError(path.string(), line_no, "missing header");
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, end);
}

template <typename Rows>
void write_csv(const std::filesystem::path& path, std::string_view header, const Rows& rows) {
  std::string text(header);
  text.push_back('\n');
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text.push_back(',');
      append_number(text, row[i]);
    }
    text.push_back('\n');
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_if_below(const std::filesystem::path& base, const std::filesystem::path& p) {
  const auto rel = p.lexically_relative(base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

template <typename T>
T required(const YAML::Node& node, const char* key, const std::filesystem::path& path) {
  const YAML::Node v = node[key];
  if (!v) throw ConfigError(path.string() + ": manifest is missing key '" + key + "'");
  try {
    return v.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": manifest key '" + key + "' has the wrong type");
  }
}

}  // namespace

ImuStream load_stream(const std::filesystem::path& path) {
  ImuStream out;
  read_csv<7>(path, kStreamHeader, [&](const std::array<double, 7>& v) {
    out.push_back({v[0], {v[1], v[2], v[3]}, {v[4], v[5], v[6]}});
  });
  return out;
}

PoseStream load_truth(const std::filesystem::path& path) {
  PoseStream out;
  read_csv<8>(path, kTruthHeader, [&](const std::array<double, 8>& v) {
    PoseSample p;
    p.t = v[0];
    p.position = {v[1], v[2], v[3]};
    p.orientation = Eigen::Quaterniond(v[4], v[5], v[6], v[7]);
    if (std::abs(p.orientation.norm() - 1.0) > 1e-6) {
      throw DataError(path.string() + ": quaternion at t=" + std::to_string(v[0]) +
                      " is not unit norm");
    }
    out.push_back(p);
  });
  return out;
}

void write_stream(const std::filesystem::path& path, const ImuStream& stream) {
  std::vector<std::array<double, 7>> rows;
  rows.reserve(stream.size());
  for (const auto& s : stream) {
    rows.push_back({s.t, s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z()});
  }
  write_csv(path, kStreamHeader, rows);
}

void write_truth(const std::filesystem::path& path, const PoseStream& truth) {
  std::vector<std::array<double, 8>> rows;
  rows.reserve(truth.size());
  for (const auto& p : truth) {
    const auto& q = p.orientation;
    rows.push_back({p.t, p.position.x(), p.position.y(), p.position.z(), q.w(), q.x(), q.y(), q.z()});
  }
  write_csv(path, kTruthHeader, rows);
}

SequenceManifest read_manifest(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw DataError("cannot open manifest '" + path.string() + "'");
  } catch (const YAML::ParserException& e) {
    throw ParseError(path.string(), static_cast<std::size_t>(e.mark.line + 1), e.msg);
  }
  const auto base = path.parent_path();
  SequenceManifest m;
  const int schema = required<int>(root, "schema_version", path);
  if (schema != SequenceManifest::kSchemaVersion) {
    throw ConfigError(path.string() + ": manifest schema_version " + std::to_string(schema) +
                      " unsupported (expects " + std::to_string(SequenceManifest::kSchemaVersion) + ")");
  }
  m.sequence_id = required<std::string>(root, "sequence_id", path);
  m.subject_id = required<std::string>(root, "subject_id", path);
  m.mode = parse_walking_mode(required<std::string>(root, "mode", path));
  m.duration = required<double>(root, "duration_s", path);
  const YAML::Node truth = root["truth"];
  if (!truth) throw ConfigError(path.string() + ": manifest is missing key 'truth'");
  m.truth_path = resolve(base, required<std::string>(truth, "path", path));
  m.truth_rate_hz = required<double>(truth, "rate_hz", path);
  const YAML::Node devices = root["devices"];
  if (!devices || !devices.IsSequence() || devices.size() == 0) {
    throw ConfigError(path.string() + ": manifest needs a non-empty 'devices' list");
  }
  for (const auto& d : devices) {
    DeviceEntry e;
    e.name = required<std::string>(d, "name", path);
    e.path = resolve(base, required<std::string>(d, "path", path));
    e.rate_hz = required<double>(d, "rate_hz", path);
    if (const YAML::Node q = d["initial_rotation_wxyz"]) {
      const auto v = q.as<std::vector<double>>();
      if (v.size() != 4) throw ConfigError(path.string() + ": initial_rotation_wxyz needs 4 values");
      e.initial_rotation = Eigen::Quaterniond(v[0], v[1], v[2], v[3]);
    }
    m.devices.push_back(std::move(e));
  }
  for (const auto& d : m.devices) {
    if (!std::filesystem::exists(d.path)) {
      throw DataError(path.string() + ": device file '" + d.path.string() + "' does not exist");
    }
  }
  if (!std::filesystem::exists(m.truth_path)) {
    throw DataError(path.string() + ": truth file '" + m.truth_path.string() + "' does not exist");
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const SequenceManifest& m) {
  const auto base = path.parent_path();
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << SequenceManifest::kSchemaVersion;
  out << YAML::Key << "sequence_id" << YAML::Value << m.sequence_id;
  out << YAML::Key << "subject_id" << YAML::Value << m.subject_id;
  out << YAML::Key << "mode" << YAML::Value << std::string(to_string(m.mode));
  out << YAML::Key << "duration_s" << YAML::Value << m.duration;
  out << YAML::Key << "truth" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "path" << YAML::Value << relative_if_below(base, m.truth_path);
  out << YAML::Key << "rate_hz" << YAML::Value << m.truth_rate_hz;
  out << YAML::EndMap;
  out << YAML::Key << "devices" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : m.devices) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << d.name;
    out << YAML::Key << "path" << YAML::Value << relative_if_below(base, d.path);
    out << YAML::Key << "rate_hz" << YAML::Value << d.rate_hz;
    const auto& q = d.initial_rotation;
    out << YAML::Key << "initial_rotation_wxyz" << YAML::Value << YAML::Flow
        << std::vector<double>{q.w(), q.x(), q.y(), q.z()};
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << out.c_str() << '\n';
}

}  // namespace suitein::dataio
