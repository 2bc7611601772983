#pragma once

#include <stdexcept>
#include <string>

namespace llem {

/// Shape or size contract violated by the caller.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file or unsupported encoding.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where the math requires finite ones.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weight archive lacks tensors that a network needs.
class MissingWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace llem
