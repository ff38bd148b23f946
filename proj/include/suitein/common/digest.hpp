// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace suitein {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);

/// Hex SHA-256 of `text`, truncated to `chars` characters.
std::string short_digest(std::string_view text, std::size_t chars = 16);

}  // namespace suitein
