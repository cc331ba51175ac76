#pragma once

#include <stdexcept>
#include <string>

namespace malign {

// Base of all library errors. The CLI maps each subclass to a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (manifests, traits, configs).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Filesystem or container-format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Optimization failures such as a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace malign
