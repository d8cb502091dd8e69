#pragma once

#include <stdexcept>
#include <string>

namespace seqsum {

// Base exception for all library failures. Messages are meant to be shown to
// users verbatim, so they carry file/line/op context where available.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for tensor shape incompatibilities; message names the op and shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqsum
