// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace aems {

// Every failure raised by the library derives from Error so the CLI can map
// categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or widths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (empty softmax, zero-norm cosine).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// API misuse: non-scalar backward root, repeated pair index, empty matrix.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Bad records: illegal band, duplicate id, out-of-range token id.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed columns in a tabular file.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid configuration values or keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint payload does not match its header.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NumericAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace aems
