#pragma once

#include <stdexcept>
#include <string>

namespace savg {

// Maps to CLI exit code 2.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/consistency violation inside the tensor engine (also exit code 2).
class ShapeError : public InvalidInputError {
 public:
  explicit ShapeError(const std::string& msg) : InvalidInputError(msg) {}
};

// Maps to CLI exit code 3.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf detected in a tensor. Maps to CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace savg
