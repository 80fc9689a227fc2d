#pragma once

#include <stdexcept>
#include <string>

namespace diffiq {

// Error taxonomy mirrors the CLI exit codes: IoError -> 2, FormatError and
// ShapeError -> 3, ConfigError -> 4, NumericError -> 5.

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffiq
