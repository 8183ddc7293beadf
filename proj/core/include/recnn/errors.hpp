#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace recnn {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or schema dimensions disagree with what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A dataset, checkpoint or config file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A parsed file is well-formed but inconsistent with its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

/// Raised by the vario-eta update when sigma + phi is exactly zero.
class DegenerateVarianceError : public Error {
 public:
  DegenerateVarianceError(std::size_t coordinate, const std::string& what)
      : Error(what), coordinate_(coordinate) {}

  std::size_t coordinate() const noexcept { return coordinate_; }

 private:
  std::size_t coordinate_;
};

/// The quasi-Newton baseline refuses parameter counts above its cap.
class MemoryCapError : public Error {
 public:
  using Error::Error;
};

/// An optimizer or experiment configuration violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace recnn
