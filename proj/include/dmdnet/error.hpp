#pragma once

#include <stdexcept>
#include <string>

namespace dmdnet {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mesh invariant violation (bad index, repeated vertex, too few elements).
class MeshError : public Error {
 public:
  using Error::Error;
};

// Geometry that cannot be normalised or measured (zero extent, all faces degenerate).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by a taped op or fed to the optimizer.
class NumericalFault : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmdnet
