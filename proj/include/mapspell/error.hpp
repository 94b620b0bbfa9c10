#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mapspell {

/// Base of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (bad preset, out-of-range knob).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed input data. `line` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data is well formed but cannot satisfy a request (too few rows, missing class).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes are incompatible for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Stored fingerprint does not match the actual content.
class HashMismatch : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace mapspell
