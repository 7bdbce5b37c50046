#pragma once

#include <stdexcept>
#include <string>

namespace casediag {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape/axis mismatch between tensors. Messages name the offending axis.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid argument value (k out of range, empty grid, bad factor, ...).
struct ParameterError : Error {
  using Error::Error;
};

/// Value outside the mathematical domain of an operation (e.g. negative distance).
struct DomainError : Error {
  using Error::Error;
};

/// Invalid configuration (indivisible patch shape, unknown config keys, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// Dataset-level problem (single-class set, empty mask, ...).
struct DataError : Error {
  using Error::Error;
};

/// On-disk format violation (truncated blob, shape mismatch vs manifest, ...).
struct FormatError : Error {
  using Error::Error;
};

/// File system failure.
struct FileError : Error {
  using Error::Error;
};

/// Training-time failure (NaN gradients, divergence).
struct TrainingError : Error {
  using Error::Error;
};

/// Metric cannot be computed (single-class labels, length mismatch).
struct MetricError : Error {
  using Error::Error;
};

/// Confidence calibration failure (no correct leave-one-out matches).
struct CalibrationError : Error {
  using Error::Error;
};

/// API misuse (backward on non-scalar root, double backward without reset).
struct UsageError : Error {
  using Error::Error;
};

}  // namespace casediag
