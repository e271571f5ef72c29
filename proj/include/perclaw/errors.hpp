#pragma once

#include <stdexcept>
#include <string>

namespace perclaw {

/// Raised when a numerical fit cannot be carried out (too few points,
/// degenerate abscissae, curve never leaves its plateau, ...).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No root in the search bracket.
class NoRootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent persisted data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user configuration. `key()` names the offending parameter.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace perclaw
