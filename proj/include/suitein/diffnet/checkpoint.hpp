// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container. Byte layout (little-endian), documented in
// docs/formats.md:
//
//   offset 0  char[8]  magic "SUITECKP"
//             u32      container schema version (kSchemaVersion)
//             str      creation metadata (u32 length + UTF-8)
//             str      config digest (hex)
//             str      config document (YAML text)
//             u64      parameter block length
//             bytes    parameter block (see serialize(ParameterSet))
//             u8[32]   SHA-256 of every preceding byte
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "suitein/diffnet/parameters.hpp"

namespace suitein::diffnet {

struct Checkpoint {
  static constexpr std::uint32_t kSchemaVersion = 1;

  std::string metadata;
  std::string config_digest;
  std::string config_text;
  ParameterSet parameters;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace suitein::diffnet
