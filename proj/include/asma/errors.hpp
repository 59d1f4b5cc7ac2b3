#pragma once

#include <stdexcept>
#include <string>

namespace asma {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class SelectionError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedObjectiveError : public Error {
 public:
  using Error::Error;
};

/// Raised when a CAM-mass ratio has a zero denominator.
class UndefinedRateError : public Error {
 public:
  using Error::Error;
};

}  // namespace asma
