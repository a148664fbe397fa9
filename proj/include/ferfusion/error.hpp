#pragma once

#include <stdexcept>
#include <string>

namespace ferfusion {

enum class ErrorKind {
  Parse,
  Io,
  DimensionMismatch,
  ShapeMismatch,
  EmptyCrop,
  InsufficientClass,
  LabelConflict,
  LengthMismatch,
  EmptyInput,
  EmptyDataset,
  InvalidArgument,
};

const char* to_string(ErrorKind kind);

// Every domain failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ferfusion
