#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deception_lq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model parameter set violates one of its invariants. `violation()` names it.
class InvalidParams : public Error {
 public:
  explicit InvalidParams(std::string violation)
      : Error("invalid model parameters: " + violation), violation_(std::move(violation)) {}

  const std::string& violation() const noexcept { return violation_; }

 private:
  std::string violation_;
};

/// An argument is outside the domain an operation is defined on.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical integration produced a non-finite value.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace deception_lq
