#pragma once

#include <stdexcept>
#include <string>

namespace moedr {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A distribution parameter or observation lies outside its valid domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Shapes, layouts or schemas do not agree.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A model specification is malformed or not supported by the requested routine.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (non-finite objective, singular system, ...).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace moedr
