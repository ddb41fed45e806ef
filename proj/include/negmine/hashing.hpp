#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace negmine {

/// 64-bit FNV-1a; stable across platforms, used for item-keyed decisions.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Lowercase hex SHA-256 of a byte string or a file's contents.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace negmine
