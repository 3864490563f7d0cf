#pragma once

#include <stdexcept>
#include <string>

namespace dispost {

// Caller violated a precondition (bad sizes, empty inputs, out-of-range values).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A model/posterior combination that cannot be evaluated, e.g. a joint
// posterior for a family without a margin model.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical evaluation failed at a specific point.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No finite-density starting point could be found for a chain.
class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dispost
