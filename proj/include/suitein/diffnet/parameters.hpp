// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "suitein/diffnet/tensor.hpp"

namespace suitein::diffnet {

/// Named tensors of a model. Entries are shared handles: the layers that
/// registered them read the same storage. Trainable entries have
/// requires_grad set; buffers (batch-norm running statistics) do not.
class ParameterSet {
 public:
  static constexpr std::uint32_t kSchemaVersion = 1;

  void add(const std::string& name, Tensor tensor);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  std::vector<std::string> names() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Copies every value from `other`; names and shapes must match exactly.
  void assign_from(const ParameterSet& other);
  /// Independent deep copy.
  ParameterSet clone() const;

 private:
  std::map<std::string, Tensor> entries_;
};

/// Little-endian binary encoding of a parameter set. Layout:
///   "SUITEPRM" | u32 schema | u64 count | per entry:
///   u32 name_len, name bytes, u8 trainable, u32 rank, u64 dims[rank], f64 values[numel]
/// Entries are written in name order, so the encoding is canonical.
std::vector<std::uint8_t> serialize(const ParameterSet& params);
ParameterSet deserialize(const std::vector<std::uint8_t>& bytes);

}  // namespace suitein::diffnet
