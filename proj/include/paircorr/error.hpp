#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paircorr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or argument violation (bad BinConfig, negative window, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed tag file, curve file or config file. Carries the line (text
/// formats) or byte offset (binary format) where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t location, bool is_line = true)
      : Error(what + (is_line ? " (line " : " (offset ") + std::to_string(location) + ")"),
        location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// Numerical failure inside a fit (singular normal equations, ...).
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace paircorr
