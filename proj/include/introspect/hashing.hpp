// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace introspect {

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// First 16 hex digits of sha256_hex; used for content-addressed names.
std::string short_hash(std::string_view bytes);

std::vector<std::uint8_t> base64_decode(std::string_view text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

// Derives an independent per-stage seed from one top-level seed.
std::uint64_t derive_seed(std::uint64_t top_level_seed, std::string_view stage);

}  // namespace introspect
