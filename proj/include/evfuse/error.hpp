#pragma once

#include <stdexcept>
#include <string>

namespace evfuse {

/// A caller broke a precondition (shape mismatch, empty input, non one-hot label).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the mathematical domain of the operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Infinite evidence: an opinion with zero uncertainty where a finite Dirichlet is required.
class SingularityError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Malformed or inconsistent files on disk.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unparseable or invalid run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evfuse
