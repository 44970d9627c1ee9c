#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "segcl/error.hpp"

namespace segcl {

/// Wrapper enforcing the config contract: every key must be known, required
/// keys must be present, and diagnostics name the field path.
class StrictView {
 public:
  StrictView(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    require(j_.is_object(), "config.schema", path_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename V>
  V get(const std::string& key) {
    require(j_.contains(key), "config.missing_field", "missing required field " + at(key));
    return fetch<V>(key);
  }

  template <typename V>
  V get_or(const std::string& key, V fallback) {
    if (!j_.contains(key)) return fallback;
    return fetch<V>(key);
  }

  StrictView child(const std::string& key) {
    require(j_.contains(key), "config.missing_field", "missing required field " + at(key));
    seen_.insert(key);
    return StrictView(j_.at(key), at(key));
  }

  std::optional<StrictView> child_opt(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return StrictView(j_.at(key), at(key));
  }

  /// Call after consuming all expected keys; rejects anything else.
  void finish() const {
    for (const auto& [key, value] : j_.items())
      require(seen_.count(key) > 0, "config.unknown_key", "unknown field " + at(key));
  }

  const nlohmann::json& raw() const { return j_; }

 private:
  template <typename V>
  V fetch(const std::string& key) {
    seen_.insert(key);
    try {
      return j_.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
      throw Error("config.schema", "field " + at(key) + " has the wrong type");
    }
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace segcl
