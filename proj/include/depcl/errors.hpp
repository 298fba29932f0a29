#ifndef DEPCL_ERRORS_HPP
#define DEPCL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace depcl {

/// Raised when vector or matrix dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation is called outside its documented domain.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an output file cannot be written or an input file read.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace depcl

#endif  // DEPCL_ERRORS_HPP
