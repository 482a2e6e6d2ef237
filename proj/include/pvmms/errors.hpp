#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pvmms {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed instance, map or certificate text. Line and column are 1-based.
class ParseError : public Error {
public:
  ParseError(std::size_t line, std::size_t column, const std::string &what)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

/// A precondition on sizes, indices or rule/instance compatibility failed.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// An exact search exceeded its node budget. Never replaced by an estimate.
class ResourceLimitError : public Error {
public:
  using Error::Error;
};

/// A result that the underlying theory rules out was observed.
class InternalInconsistency : public Error {
public:
  using Error::Error;
};

} // namespace pvmms
