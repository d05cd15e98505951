// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#pragma once

#include <stdexcept>
#include <string>

namespace romil {

/// Base of every error raised by the library. The CLI maps each subclass to a
/// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (negative coordinate, label out of range, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or infeasible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data breaks a domain invariant (duplicate grid cell, empty bag, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// On-disk file does not match its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or an empty softmax context reached a place that cannot absorb it.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace romil
