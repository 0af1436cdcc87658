#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace morphinfo {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input did not satisfy the lexicon schema. Carries the 1-based line number
// of the offending row (the header is line 1), or 0 when not row-specific.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class MalformedRow : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class UnknownLabel : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class EmptyForm : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class DuplicatePair : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class MissingOriginAnnotation : public ValidationError {
 public:
  explicit MissingOriginAnnotation(const std::string& label)
      : ValidationError("allomorph '" + label + "' has no origin annotation", 0) {}
};

class InvalidDistribution : public Error {
 public:
  using Error::Error;
};
class UnknownAxis : public Error {
 public:
  using Error::Error;
};
class ZeroNormalizer : public Error {
 public:
  using Error::Error;
};
class AlignmentMismatch : public Error {
 public:
  using Error::Error;
};
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};
class TooFewInstances : public Error {
 public:
  using Error::Error;
};
class InconsistentProvenance : public Error {
 public:
  using Error::Error;
};
class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

}  // namespace morphinfo
