#pragma once

#include <stdexcept>
#include <string>

namespace mgopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on shapes or values violated.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A requested time window is not covered by the available series.
class DataRangeError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV ingestion, model files).
class DataError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgopt
