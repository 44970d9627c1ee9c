#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace segcl {

/// Exception carrying a machine-readable category ("io.truncated",
/// "config.unknown_key", ...) next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

inline void require(bool cond, const std::string& category, const std::string& message) {
  if (!cond) throw Error(category, message);
}

}  // namespace segcl
