#pragma once

#include <stdexcept>
#include <string>

namespace mixedquant {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed format descriptor, invalid format parameters or an invalid code
/// for a format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not compose, or layer hyperparameters that are
/// inconsistent with their weights.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Accumulator overflow with saturation disabled.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument to a numeric routine (e.g. normalizing an all-zero tensor).
class DomainError : public Error {
 public:
  using Error::Error;
};

enum class IoErrorKind {
  kIo,
  kBadMagic,
  kBadVersion,
  kMalformed,
  kMissingBlob,
  kBlobSizeMismatch,
  kChecksumMismatch,
  kShapeMismatch,
  kUnknownLayerKind,
};

const char* to_string(IoErrorKind kind) noexcept;

/// File-format failures. `kind()` distinguishes the cause; the message names
/// the offending file or field.
class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what);
  IoErrorKind kind() const noexcept { return kind_; }

 private:
  IoErrorKind kind_;
};

}  // namespace mixedquant
