#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace statetrait {

/// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown format, empty dictionary list, missing threshold entry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A malformed input record. `line()` is 1-based; 0 when not line-oriented.
class ValidationError : public Error {
 public:
  ValidationError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Statistical estimation could not proceed (too few groups, n < 2, ...).
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must be aligned (same post, same rows) are not.
class PairingError : public Error {
 public:
  using Error::Error;
};

/// Singular or otherwise unusable regression design.
class DesignError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure. Safe to retry.
class RetryableError : public Error {
 public:
  using Error::Error;
};

/// A structured model output that stayed invalid after repair.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

class AssessmentError : public Error {
 public:
  AssessmentError(std::string item_id, const std::string& what)
      : Error("item " + item_id + ": " + what), item_id_(std::move(item_id)) {}
  const std::string& item_id() const noexcept { return item_id_; }

 private:
  std::string item_id_;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

/// Invalid distribution parameters.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was asked to run before the stage that produces its inputs.
class DependencyError : public Error {
 public:
  DependencyError(const std::string& artifact, const std::string& stage)
      : Error("missing artifact '" + artifact + "'; run stage '" + stage + "' first"),
        stage_(stage) {}
  const std::string& required_stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace statetrait
