#ifndef TUPRE_ERRORS_HPP
#define TUPRE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tupre {

// Base class for every error raised by the library. The CLI maps the
// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: wrong lengths, indices out of range, invalid models.
class InputError : public Error {
 public:
  using Error::Error;
};

// Inputs that are well formed but carry no usable information
// (all-zero operator, no signal above the noise floor).
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

// A formula evaluated outside its domain (alpha = 0 in a 1/alpha term,
// a zero GCV denominator, sigma >= 1 in the lower bound).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced during a computation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, double alpha)
      : Error(what), alpha_(alpha) {}
  explicit NumericError(const std::string& what) : Error(what) {}

  double alpha() const noexcept { return alpha_; }

 private:
  double alpha_ = 0.0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tupre

#endif  // TUPRE_ERRORS_HPP
