#pragma once

#include <stdexcept>
#include <string>

namespace dab {

/// Invalid or inconsistent configuration (maps to CLI exit status 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dab
