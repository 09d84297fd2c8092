#pragma once

#include <stdexcept>
#include <string>

namespace bcensus {

// Root of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The requested computation exceeds a cost guard.
class ResourceLimit : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, payloads).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// No resolved observations are available to estimate from.
class NoEstimate : public Error {
 public:
  using Error::Error;
};

// A bound is mathematically undefined for the given inputs (e.g. gamma = 0).
class UndefinedBound : public Error {
 public:
  using Error::Error;
};

}  // namespace bcensus
