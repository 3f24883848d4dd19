#pragma once

#include <stdexcept>
#include <string>

namespace lpk {

// Error taxonomy mirrored by the CLI exit codes:
//   config/usage problems -> 2, numeric divergence -> 3, file format/I-O -> 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public ConfigError {
 public:
  explicit DimensionError(const std::string& msg) : ConfigError(msg) {}
};

class DomainError : public ConfigError {
 public:
  explicit DomainError(const std::string& msg) : ConfigError(msg) {}
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& msg, long step)
      : std::runtime_error(msg), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lpk
