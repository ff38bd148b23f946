// SPDX-License-Identifier: Apache-2.0
#include "suitein/dataio/types.hpp"

#include <array>
#include <utility>

#include "suitein/common/error.hpp"

namespace suitein::dataio {

namespace {
constexpr std::array<std::pair<WalkingMode, std::string_view>, 10> kModes{{
    {WalkingMode::STW, "STW"},
    {WalkingMode::PVW, "PVW"},
    {WalkingMode::MVW, "MVW"},
    {WalkingMode::DRW, "DRW"},
    {WalkingMode::DLW, "DLW"},
    {WalkingMode::HD, "HD"},
    {WalkingMode::MP, "MP"},
    {WalkingMode::PK, "PK"},
    {WalkingMode::BG, "BG"},
    {WalkingMode::SYN, "SYN"},
}};
}  // namespace

std::string_view to_string(WalkingMode mode) {
  for (const auto& [m, name] : kModes) {
    if (m == mode) return name;
  }
  return "?";
}

WalkingMode parse_walking_mode(std::string_view tag) {
  for (const auto& [m, name] : kModes) {
    if (name == tag) return m;
  }
  throw ConfigError("unknown walking mode '" + std::string(tag) +
                    "' (expected one of STW, PVW, MVW, DRW, DLW, HD, MP, PK, BG, SYN)");
}

}  // namespace suitein::dataio
