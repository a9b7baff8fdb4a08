#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace eduqg {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value, int indent = 2);

/// Writes to a sibling temporary file and renames over `path`, so readers
/// never observe a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Canonical serialization: sorted keys, no whitespace. nlohmann::json
/// objects are ordered maps, so dump() is already key-order independent.
std::string canonical_dump(const Json& value);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

}  // namespace eduqg
