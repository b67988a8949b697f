// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace deepjoint {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (log of 0, negative gap, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition of an API call.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration document or field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or diverging optimisation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepjoint
