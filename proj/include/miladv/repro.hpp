#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace miladv {

/// FNV-1a 64-bit; used as a content fingerprint, not for security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Fingerprint of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Fingerprint of a JSON value's canonical (sorted-key) dump.
std::string json_hash(const nlohmann::json& j);

/// Writes `j` with 2-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace miladv
