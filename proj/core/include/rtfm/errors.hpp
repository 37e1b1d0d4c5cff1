#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rtfm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its admissible range (k > T, dilation < 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, single-class batch).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration or dataset content.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined for the given labels (e.g. AUC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file. Carries the byte offset of the problem.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace rtfm
