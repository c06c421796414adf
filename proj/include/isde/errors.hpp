#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace isde {

/// Operand dimensions disagree (jet contexts, map arities, matrix shapes).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A partial function was evaluated outside its domain (log of a
/// non-positive value, division by zero, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Base for failures that can occur inside a time loop; carries the step
/// index once the integrator knows it.
class StepError : public std::runtime_error {
 public:
  explicit StepError(const std::string& what) : std::runtime_error(what), message_(what) {}

  [[nodiscard]] std::optional<std::size_t> step() const { return step_; }
  [[nodiscard]] const std::string& message() const { return message_; }

  void attach_step(std::size_t step) {
    step_ = step;
    full_ = "step " + std::to_string(step) + ": " + message_;
  }

  [[nodiscard]] const char* what() const noexcept override {
    return step_ ? full_.c_str() : std::runtime_error::what();
  }

 private:
  std::string message_;
  std::string full_;
  std::optional<std::size_t> step_;
};

/// The velocity Hessian of a Lagrangian is (numerically) singular.
class RegularityError : public StepError {
 public:
  RegularityError(const std::string& what, double pivot) : StepError(what), pivot_(pivot) {}
  [[nodiscard]] double pivot() const { return pivot_; }

 private:
  double pivot_;
};

/// A metric or quadratic tensor could not be inverted.
class SingularTensorError : public StepError {
 public:
  using StepError::StepError;
};

/// A point does not lie in the requested chart.
class OutOfChart : public StepError {
 public:
  using StepError::StepError;
};

/// No chart of the atlas accepts a state.
class LeftAtlas : public StepError {
 public:
  using StepError::StepError;
};

}  // namespace isde
