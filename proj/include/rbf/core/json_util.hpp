#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "rbf/core/error.hpp"

namespace rbf::json {

using nlohmann::json;

// Rejects keys outside `allowed`; `path` names the object in error messages.
inline void requireKeys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(path + "." + key + ": unknown key");
  }
}

// Reads j[key] into out when present, reporting type errors with the path.
template <typename T>
void read(const json& j, const std::string& key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type (" + std::string(j.at(key).type_name()) + ")");
  }
}

}  // namespace rbf::json
