#pragma once

#include <stdexcept>
#include <string>

namespace atgt {

// Exit-code contract shared by the library and the CLI:
//   0 ok, 1 usage, 2 I/O, 3 validation, 4 numeric failure.
enum class ErrorCode : int {
  usage = 1,
  io = 2,
  validation = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(std::string message)
      : Error(ErrorCode::usage, std::move(message)) {}
};

// I/O failures carry the offending path so the CLI can surface it in the
// machine-readable error record.
class IoError : public Error {
 public:
  IoError(std::string message, std::string path)
      : Error(ErrorCode::io, std::move(message)), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::string message)
      : Error(ErrorCode::validation, std::move(message)) {}
};

// Undefined normalization, degenerate denominators, divergence.
class NumericError : public Error {
 public:
  explicit NumericError(std::string message)
      : Error(ErrorCode::numeric, std::move(message)) {}
};

}  // namespace atgt
