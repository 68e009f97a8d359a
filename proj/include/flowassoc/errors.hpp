#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowassoc {

/// Base of every error raised by the library. `code()` is a short stable
/// token the CLI prints so scripts can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

/// Malformed text input. Line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("parse_error", source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

/// Non-finite values or a failed factorization. `where` names the stage
/// (flow block index, parameter group, filter step).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& where, const std::string& what)
      : Error("numerical_error", where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io_error", what) {}
};

}  // namespace flowassoc
