#pragma once

#include <stdexcept>
#include <string>

namespace contir {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain (log of a non-positive value, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity was produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (task files, embedding files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that does not permit the call.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace contir
