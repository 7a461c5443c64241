#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jointlink {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; row is 1-based counting the header as row 1.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : Error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value outside its domain (treatment not 0/1, negative probability, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Propensity model cannot be fit: one treatment arm is empty or too few rows.
class PositivityError : public Error {
 public:
  using Error::Error;
};

}  // namespace jointlink
