#pragma once

#include <stdexcept>
#include <string>

namespace odmpc {

// Joint covariance could not be inverted even after regularization.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& msg, double condition_number)
      : std::runtime_error(msg), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

// Quu stayed indefinite through the whole regularization schedule.
class BackwardPassError : public std::runtime_error {
 public:
  BackwardPassError(const std::string& msg, int step)
      : std::runtime_error(msg), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

// Non-finite derivative while expanding the cost along a trajectory.
class ExpansionError : public std::runtime_error {
 public:
  ExpansionError(const std::string& msg, int step)
      : std::runtime_error(msg), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace odmpc
