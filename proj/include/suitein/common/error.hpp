// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace suitein {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or array dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Invalid configuration value, unknown key or unusable argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (ordering, coverage, too few spikes...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint could not be read or does not match the expected model.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& component, const std::string& what)
      : Error(what), component_(component) {}

  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace suitein
