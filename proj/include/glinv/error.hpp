#pragma once

#include <stdexcept>
#include <string>

namespace glinv {

/// Invalid arguments or violated preconditions of a public operation.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy result
/// (resonance, singular system, divergence, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0, std::string key = {})
      : std::runtime_error(what), line_(line), key_(std::move(key)) {}

  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  int line_;
  std::string key_;
};

}  // namespace glinv
