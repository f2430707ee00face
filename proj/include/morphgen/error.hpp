#pragma once

#include <stdexcept>
#include <string>

namespace morphgen {

// Base of every error the library throws. Item-level problems that are data
// (parse diagnostics, validation violations) are returned, not thrown.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration (threshold tables, split ratios, config documents).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A corpus record does not match the record schema. Carries the 1-based line.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : Error("duplicate item id '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// A backend lacks a feature (log-probabilities, grammar checking, ...).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Network-level or retryable server failure after retries are exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Thrown by backends for failures worth retrying (connection reset, 5xx, 429).
class TransientError : public Error {
 public:
  using Error::Error;
};

// Non-retryable request rejection (4xx). Message includes a body excerpt.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

// Multi-step prompting could not extract the input a later step needs.
class StepBindingError : public Error {
 public:
  using Error::Error;
};

class JudgeParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace morphgen
