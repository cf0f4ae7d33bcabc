#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tfa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, configuration, or violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are well-formed but unusable (wrong shapes, degenerate values).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise numerically broken state.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary container. Carries the byte offset of the failure.
class FormatError : public DataError {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kZeroDim,
    kZeroLengthSequence,
    kBadField,
  };

  FormatError(Kind kind, std::size_t offset, const std::string& what)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

}  // namespace tfa
