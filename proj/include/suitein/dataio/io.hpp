// SPDX-License-Identifier: Apache-2.0
//
// File formats (see docs/formats.md):
//   sensor CSV  header t,ax,ay,az,gx,gy,gz
//   truth CSV   header t,px,py,pz,qw,qx,qy,qz
//   manifest    YAML document, one per sequence
#pragma once

#include <filesystem>

#include "suitein/dataio/types.hpp"

namespace suitein::dataio {

/// Parses a sensor CSV. Throws ParseError (with line number) on malformed rows
/// and DataError on duplicate or decreasing timestamps.
ImuStream load_stream(const std::filesystem::path& path);
PoseStream load_truth(const std::filesystem::path& path);

/// Writes with shortest round-trip decimal formatting, so load(write(x)) == x.
void write_stream(const std::filesystem::path& path, const ImuStream& stream);
void write_truth(const std::filesystem::path& path, const PoseStream& truth);

/// Relative paths inside the manifest are resolved against its directory.
SequenceManifest read_manifest(const std::filesystem::path& path);
/// Device and truth paths are written relative to the manifest directory when
/// they live below it.
void write_manifest(const std::filesystem::path& path, const SequenceManifest& manifest);

}  // namespace suitein::dataio
