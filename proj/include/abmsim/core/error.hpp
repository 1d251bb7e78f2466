#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace abmsim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an API contract (stale tape handle, wrong arity...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A value fell outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite number met during differentiation or optimisation.
class NumericError : public DomainError {
 public:
  using DomainError::DomainError;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed tabular input; message names the first bad row/column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& what)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class InfeasibleError : public DomainError {
 public:
  using DomainError::DomainError;
};

class ConvergenceError : public DomainError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : DomainError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Config validation failure carrying every violation found.
class ConfigError : public Error {
 public:
  struct Issue {
    std::string pointer;  // JSON pointer, e.g. "/epi/beta"
    std::string message;
  };

  explicit ConfigError(std::vector<Issue> issues)
      : Error(summarize(issues)), issues_(std::move(issues)) {}
  ConfigError(std::string pointer, std::string message)
      : ConfigError(std::vector<Issue>{{std::move(pointer), std::move(message)}}) {}
  const std::vector<Issue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<Issue>& issues) {
    std::string out = "invalid config:";
    for (const auto& i : issues) out += "\n  " + i.pointer + ": " + i.message;
    return out;
  }
  std::vector<Issue> issues_;
};

}  // namespace abmsim
