#pragma once

#include <stdexcept>
#include <string>

namespace wah {

/// Base of every exception thrown by the library. The C API maps each
/// subclass onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shape, empty range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File was readable but its contents are malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace wah
