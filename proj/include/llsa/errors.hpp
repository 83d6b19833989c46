// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace llsa {

// Common base so callers can catch everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration field is malformed (non-positive size, bad scale, index range
// wider than the 32-bit block indices used throughout).
struct ConfigError : Error {
  using Error::Error;
};

// A length that must be an exact multiple of the block size (or a power of
// it) is not.
struct DivisibilityError : Error {
  using Error::Error;
};

// Level count or enrichment depth outside the admissible range.
struct LevelError : Error {
  using Error::Error;
};

// Top-K width outside [1, coarsest candidate count].
struct TopKError : Error {
  using Error::Error;
};

// Matrix/vector dimensions disagree with each other or with the config.
struct ShapeMismatch : Error {
  using Error::Error;
};

// A block or token index refers outside its declared range.
struct IndexOutOfRange : Error {
  using Error::Error;
};

// NaN or infinity where a finite value is required.
struct NonFiniteError : Error {
  using Error::Error;
};

// Saved forward state does not correspond to the inputs handed to backward.
struct StaleState : Error {
  using Error::Error;
};

// Malformed tensor file (bad magic, version, dtype, or payload length).
struct FormatError : Error {
  using Error::Error;
};

// Underlying I/O failed (open, read, write).
struct IoError : Error {
  using Error::Error;
};

// Operation requires the double-precision build.
struct PrecisionError : Error {
  using Error::Error;
};

// Block size is not a perfect square (2-D reordering needs s = sqrt(B)).
struct NotSquareBlock : Error {
  using Error::Error;
};

// A quadratic reference implementation was asked to run beyond its size cap.
struct OracleCapExceeded : Error {
  using Error::Error;
};

}  // namespace llsa
