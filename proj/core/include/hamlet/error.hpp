#pragma once

#include <stdexcept>
#include <string>

namespace hamlet {

/// Base error for everything this library throws.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration or arguments supplied by the caller (CLI exit 2).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Data or model files that exist but do not fit together (CLI exit 3).
class DataError : public Error {
public:
  using Error::Error;
};

/// Numerically undefined or unsolvable request (CLI exit 4).
class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace hamlet
