#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace periop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header or registry mismatch: unknown column, missing column, bad kind.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell that could not be parsed. `row` is the 1-based data line.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string column, const std::string& what)
      : Error("row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row),
        column_(std::move(column)) {}

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

// Invalid run configuration; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace periop
