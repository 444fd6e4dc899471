#pragma once

#include <stdexcept>
#include <string>

namespace isoplane {

// Error categories. Every exception thrown by the library derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

// Malformed or inconsistent file content; the message names the offending field.
struct FormatError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct LoadError : Error {
  using Error::Error;
};

struct TrainingFault : Error {
  TrainingFault(const std::string& what, long step_index)
      : Error(what + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
  long step;
};

}  // namespace isoplane
