#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uhr {

// Base class for everything thrown by this library. The command line tool
// maps subclasses onto exit codes, so new error kinds should derive from one
// of the categories below rather than from Error directly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments, dimension mismatches, non-finite data, malformed records.
struct InvalidInput : Error {
  using Error::Error;
};

// Cholesky pivot fell below threshold; pivot_index is the failing column.
struct SingularMatrix : Error {
  SingularMatrix(const std::string& msg, std::ptrdiff_t pivot)
      : Error(msg), pivot_index(pivot) {}
  std::ptrdiff_t pivot_index;
};

// All observation weights are zero.
struct DegenerateWeights : Error {
  using Error::Error;
};

// Residual spread estimate collapsed to zero where a positive one is needed.
struct DegenerateScale : Error {
  using Error::Error;
};

// Influence-derivative mean is zero, so no covariance can be formed.
struct DegenerateMoments : Error {
  using Error::Error;
};

// More than half of the bootstrap replicates failed.
struct BootstrapFailed : Error {
  using Error::Error;
};

// Configuration or schema files that do not match the documented format.
struct SchemaError : Error {
  using Error::Error;
};

// Filesystem and stream failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace uhr
