#pragma once

#include <stdexcept>
#include <string>

namespace evogood {

/// Out-of-range node index or timestamp.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration (dimensions, hyperparameters, missing labels).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value or divergence during a numerical computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (e.g. entropy of an empty graph).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A metric is undefined on the given input (e.g. AUC with a single class).
class UndefinedMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace evogood
