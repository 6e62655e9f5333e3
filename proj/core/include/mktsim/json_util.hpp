#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "mktsim/error.hpp"

namespace mktsim::json_util {

using nlohmann::json;

/// Throws ConfigError naming the first key of obj not in allowed.
inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + std::string(where) + "." + key + "'");
  }
}

/// Reads obj[key] into out when present; type mismatches throw ConfigError.
template <class T> void read(const json& obj, std::string_view key, T& out, std::string_view where) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end()) return;
  const auto bad = [&] { return ConfigError("wrong type for '" + std::string(where) + "." + std::string(key) + "'"); };
  // nlohmann silently truncates 1.5 to an integer
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>)
    if (!it->is_number_integer()) throw bad();
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw bad();
  }
}

} // namespace mktsim::json_util
