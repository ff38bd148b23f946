// SPDX-License-Identifier: Apache-2.0
#include "suitein/diffnet/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "suitein/common/digest.hpp"
#include "suitein/common/error.hpp"
#include "suitein/diffnet/binary_io.hpp"

namespace suitein::diffnet {

namespace {
constexpr char kMagic[8] = {'S', 'U', 'I', 'T', 'E', 'C', 'K', 'P'};
constexpr std::size_t kDigestBytes = 32;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> bytes;
  ByteWriter w(bytes);
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(Checkpoint::kSchemaVersion);
  w.put_string(checkpoint.metadata);
  w.put_string(checkpoint.config_digest);
  w.put_string(checkpoint.config_text);
  const std::vector<std::uint8_t> block = serialize(checkpoint.parameters);
  w.put<std::uint64_t>(block.size());
  w.put_bytes(block.data(), block.size());
  const Sha256 digest = sha256(bytes);
  w.put_bytes(digest.data(), digest.size());
  return bytes;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t)) {
    throw CheckpointError("checkpoint truncated: only " + std::to_string(bytes.size()) +
                          " bytes");
  }
  if (!std::equal(kMagic, kMagic + 8, bytes.begin())) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  ByteReader r(bytes.data(), bytes.size());
  char magic[8];
  r.get_bytes(magic, sizeof(magic));
  const auto schema = r.get<std::uint32_t>();
  if (schema != Checkpoint::kSchemaVersion) {
    throw CheckpointError("checkpoint schema version " + std::to_string(schema) +
                          " is not supported by this build (expects version " +
                          std::to_string(Checkpoint::kSchemaVersion) + ")");
  }
  Checkpoint out;
  out.metadata = r.get_string();
  out.config_digest = r.get_string();
  out.config_text = r.get_string();
  const auto block_size = r.get<std::uint64_t>();
  if (block_size > r.remaining()) {
    throw CheckpointError("checkpoint truncated: parameter block of " +
                          std::to_string(block_size) + " bytes, only " +
                          std::to_string(r.remaining()) + " remain");
  }
  std::vector<std::uint8_t> block(block_size);
  r.get_bytes(block.data(), block.size());
  const std::size_t payload = r.position();
  if (r.remaining() != kDigestBytes) {
    throw CheckpointError("checkpoint truncated or padded: expected a " +
                          std::to_string(kDigestBytes) + "-byte checksum, found " +
                          std::to_string(r.remaining()) + " trailing bytes");
  }
  const Sha256 expected = sha256(std::span<const std::uint8_t>(bytes.data(), payload));
  if (!std::equal(expected.begin(), expected.end(), bytes.begin() + payload)) {
    throw CheckpointError("checkpoint corrupted: checksum mismatch");
  }
  out.parameters = deserialize(block);
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace suitein::diffnet
