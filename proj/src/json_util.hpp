#pragma once

// Field accessors that turn nlohmann type errors into ParseError with a
// path like "buses[3].x".

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "coherence/errors.hpp"

namespace coherence::detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const std::string& key,
                                     const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "." + key + ": missing field");
  return *it;
}

inline double number(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline double number_or(const nlohmann::json& obj, const std::string& key, double fallback,
                        const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return number(obj, key, where);
}

inline std::optional<double> optional_number(const nlohmann::json& obj, const std::string& key,
                                             const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return number(obj, key, where);
}

inline int integer(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline std::string string(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline const nlohmann::json& array(const nlohmann::json& obj, const std::string& key,
                                   const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_array()) throw ParseError(where + "." + key + ": expected an array");
  return v;
}

inline std::string indexed(const std::string& where, const std::string& key, std::size_t i) {
  return where + "." + key + "[" + std::to_string(i) + "]";
}

/// Reads and parses a JSON file; parse errors report line and column.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace coherence::detail
