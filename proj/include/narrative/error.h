#ifndef NARRATIVE_ERROR_H_
#define NARRATIVE_ERROR_H_

#include <stdexcept>
#include <string>

namespace narrative {

// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a format or invariant (malformed records, label
// length mismatches, inconsistent annotations).
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor or matrix dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// File or network I/O failed.
class IoError : public Error {
 public:
  using Error::Error;
};

// Caller passed an argument outside an operation's contract.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace narrative

#endif  // NARRATIVE_ERROR_H_
