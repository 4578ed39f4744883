#pragma once

#include <stdexcept>
#include <string>

namespace scnp {

// Error hierarchy. The CLI maps these onto exit codes: UsageError -> 1,
// DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by a forward op, failed factorizations, NaN loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed files, missing data, bad magic bytes.
class DataError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace scnp
