// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tsert {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's shape rule.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity was produced; raised at the op that produced it.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation tape (detached loss, double backward, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, partitions, filter designs or pipeline settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable persisted data.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LabelMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace tsert
