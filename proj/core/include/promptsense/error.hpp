#pragma once

#include <stdexcept>
#include <string>

namespace promptsense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad logits, negative temperature, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A template placeholder could not be resolved.
class ResolutionError : public Error {
 public:
  ResolutionError(std::string placeholder, const std::string& message)
      : Error(message), placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const noexcept { return placeholder_; }

 private:
  std::string placeholder_;
};

class UnknownTemplateError : public NotFoundError {
 public:
  using NotFoundError::NotFoundError;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

/// Raised when a fragment or follow-up template is used where a runnable prompt is required.
class NotRunnableError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::size_t line = 0) : Error(message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined for the given inputs (empty denominator, absent class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Prediction pool does not have the expected shape.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Backend failures. Every backend error carries the cache key of the request so an
/// interrupted run can be resumed.
class BackendError : public Error {
 public:
  BackendError(const std::string& message, std::string cache_key, int attempts = 1)
      : Error(message), cache_key_(std::move(cache_key)), attempts_(attempts) {}
  const std::string& cache_key() const noexcept { return cache_key_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string cache_key_;
  int attempts_;
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimitError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// A verification follow-up could not run because its base conversation failed.
class MissingBaseResponseError : public BackendError {
 public:
  using BackendError::BackendError;
};

}  // namespace promptsense
