#pragma once

#include <stdexcept>
#include <string>

namespace rbf {

// Base of every error raised by the library. The CLI maps the subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration or command-line input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent data (meshes, datasets, files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Geometric degeneracy: collinear points, parallel rays, zero extent.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, solver breakdown, non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace rbf
