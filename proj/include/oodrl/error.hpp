#pragma once

#include <stdexcept>
#include <string>

namespace oodrl {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes (TrainingError -> 3, everything else -> 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API object, e.g. a stale tape or stepping a finished episode.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class MethodError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace oodrl
