#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace semdec::io {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Sha256Digest& digest);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

} // namespace semdec::io
