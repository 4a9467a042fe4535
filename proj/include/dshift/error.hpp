#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dshift {

// Failure categories. The numeric values double as CLI exit codes and
// C API status codes.
enum class ErrorKind : int {
  usage = 1,     // invalid argument, config key or value
  data = 2,      // IO, decoding, shape or file-format problems
  training = 3,  // a training or experiment stage failed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when an extent of a tensor does not match what an operation
// requires. `dimension` names the offending axis ("channels", "height", ...).
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string dimension, std::size_t expected,
             std::size_t actual)
      : Error(ErrorKind::data,
              op + ": " + dimension + " mismatch (expected " +
                  std::to_string(expected) + ", got " +
                  std::to_string(actual) + ")"),
        op_(std::move(op)),
        dimension_(std::move(dimension)),
        expected_(expected),
        actual_(actual) {}

  ShapeError(std::string op, std::string dimension, std::string detail)
      : Error(ErrorKind::data, op + ": " + dimension + ": " + detail),
        op_(std::move(op)),
        dimension_(std::move(dimension)) {}

  const std::string& op() const noexcept { return op_; }
  const std::string& dimension() const noexcept { return dimension_; }
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::string op_;
  std::string dimension_;
  std::size_t expected_ = 0;
  std::size_t actual_ = 0;
};

// IO failure tied to a particular file.
class FileError : public Error {
 public:
  FileError(std::string path, const std::string& reason)
      : Error(ErrorKind::data, path + ": " + reason), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Raised when a weight file has the wrong format version or describes a
// different network than the one being loaded.
class ArchitectureError : public Error {
 public:
  explicit ArchitectureError(const std::string& message)
      : Error(ErrorKind::data, "architecture mismatch: " + message) {}
};

inline Error usage_error(const std::string& message) {
  return Error(ErrorKind::usage, message);
}

inline Error data_error(const std::string& message) {
  return Error(ErrorKind::data, message);
}

}  // namespace dshift
