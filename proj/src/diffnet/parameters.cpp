// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/parameters.hpp"

#include <algorithm>

#include "suitein/common/error.hpp"
#include "suitein/diffnet/binary_io.hpp"

namespace suitein::diffnet {

namespace {
constexpr char kMagic[8] = {'S', 'U', 'I', 'T', 'E', 'P', 'R', 'M'};
}

void ParameterSet::add(const std::string& name, Tensor tensor) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (!tensor.defined()) throw ConfigError("parameter '" + name + "' is undefined");
  if (!entries_.emplace(name, std::move(tensor)).second) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void ParameterSet::assign_from(const ParameterSet& other) {
  if (other.size() != size()) {
    throw CheckpointError("parameter count mismatch: have " + std::to_string(size()) +
                          ", got " + std::to_string(other.size()));
  }
  for (auto& [name, t] : entries_) {
    if (!other.contains(name)) throw CheckpointError("missing parameter '" + name + "'");
    const Tensor& src = other.at(name);
    if (src.shape() != t.shape()) {
      throw CheckpointError("parameter '" + name + "' has shape " + to_string(src.shape()) +
                            ", expected " + to_string(t.shape()));
    }
    std::ranges::copy(src.values(), t.mutable_values().begin());
  }
}

ParameterSet ParameterSet::clone() const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone());
  return out;
}

std::vector<std::uint8_t> serialize(const ParameterSet& params) {
  std::vector<std::uint8_t> bytes;
  ByteWriter w(bytes);
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(ParameterSet::kSchemaVersion);
  w.put<std::uint64_t>(params.size());
  for (const auto& [name, t] : params) {
    w.put_string(name);
    w.put<std::uint8_t>(t.requires_grad() ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    w.put_bytes(t.values().data(), t.numel() * sizeof(double));
  }
  return bytes;
}

ParameterSet deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  r.get_bytes(magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw CheckpointError("not a parameter block (bad magic)");
  }
  const auto schema = r.get<std::uint32_t>();
  if (schema != ParameterSet::kSchemaVersion) {
    throw CheckpointError("parameter schema version " + std::to_string(schema) +
                          " is not supported (expected " +
                          std::to_string(ParameterSet::kSchemaVersion) + ")");
  }
  const auto count = r.get<std::uint64_t>();
  ParameterSet out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const bool trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("parameter '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    const std::size_t n = numel(shape);
    if (n > r.remaining() / sizeof(double)) {
      throw CheckpointError("corrupt or truncated data: parameter '" + name + "' needs " +
                            std::to_string(n * sizeof(double)) + " bytes at offset " +
                            std::to_string(r.position()) + ", only " +
                            std::to_string(r.remaining()) + " remain");
    }
    std::vector<double> values(n);
    r.get_bytes(values.data(), n * sizeof(double));
    out.add(name, Tensor(std::move(shape), std::move(values), trainable));
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after parameter block");
  return out;
}

}  // namespace suitein::diffnet
