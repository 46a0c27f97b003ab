#pragma once

#include <stdexcept>
#include <string>

namespace framec {

/// Bad configuration or command-line usage (CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, missing or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk format violation; a kind of data error.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite loss or gradient during training (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace framec
