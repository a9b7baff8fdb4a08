#include "eduqg/config.hpp"

#include <charconv>
#include <cmath>

#include <yaml-cpp/yaml.h>

#include "eduqg/error.hpp"

namespace eduqg {

namespace {

Json scalar(const YAML::Node& node) {
  const std::string& s = node.Scalar();
  if (node.Tag() == "!") {
    return s;  // quoted
  }
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") {
    return nullptr;
  }
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  std::int64_t i = 0;
  auto [ip, iec] = std::from_chars(s.data(), s.data() + s.size(), i);
  if (iec == std::errc() && ip == s.data() + s.size()) {
    return i;
  }
  double d = 0.0;
  auto [dp, dec] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (dec == std::errc() && dp == s.data() + s.size() && std::isfinite(d)) {
    return d;
  }
  return s;
}

Json convert(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar(node);
    case YAML::NodeType::Sequence: {
      Json arr = Json::array();
      for (const auto& item : node) arr.push_back(convert(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      Json obj = Json::object();
      for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (obj.contains(key)) {
          throw ConfigError("duplicate key '" + key + "'");
        }
        obj[key] = convert(kv.second);
      }
      return obj;
    }
  }
  return nullptr;
}

}  // namespace

Json yaml_to_json(std::string_view text) {
  try {
    return convert(YAML::Load(std::string(text)));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML: ") + e.what());
  }
}

Json load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto ext = path.extension().string();
  try {
    if (ext == ".json") {
      return Json::parse(text);
    }
    return yaml_to_json(text);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const Json& config) {
  return sha256_hex(canonical_dump(config));
}

const Json* find_path(const Json& root, std::string_view dotted) {
  const Json* cur = &root;
  for (const auto& part : split(dotted, '.')) {
    if (!cur->is_object() || !cur->contains(part)) {
      return nullptr;
    }
    cur = &(*cur)[part];
  }
  return cur;
}

}  // namespace eduqg
