#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "eduqg/io.hpp"

namespace eduqg {

/// Parses YAML into a JSON tree. Plain scalars become null, booleans,
/// integers or doubles when they read as such; quoted scalars stay strings.
Json yaml_to_json(std::string_view text);

/// Loads a .yaml/.yml or .json file.
Json load_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON form: insensitive to key order, comments
/// and formatting.
std::string config_hash(const Json& config);

/// Looks up a dotted path such as "train.finetune.lr"; null when absent.
const Json* find_path(const Json& root, std::string_view dotted);

}  // namespace eduqg
