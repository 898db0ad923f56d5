#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace regseg {

enum class ErrorKind {
  kSize,
  kIndex,
  kShape,
  kSpec,
  kValue,
  kSyntax,
  kBinding,
  kFormat,
  kCorruption,
  kConfig,
  kIo,
};

const char* error_kind_name(ErrorKind kind);

// Base of every error thrown by the library. The kind is what callers
// dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class SizeError : public Error {
 public:
  explicit SizeError(const std::string& m) : Error(ErrorKind::kSize, m) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& m) : Error(ErrorKind::kIndex, m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(ErrorKind::kShape, m) {}
};

class SpecError : public Error {
 public:
  explicit SpecError(const std::string& m) : Error(ErrorKind::kSpec, m) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& m) : Error(ErrorKind::kValue, m) {}
};

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& m, std::size_t position);
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Raised before any compute when parameter slots cannot be resolved.
class BindingError : public Error {
 public:
  explicit BindingError(std::vector<std::string> slots);
  const std::vector<std::string>& slots() const noexcept { return slots_; }

 private:
  std::vector<std::string> slots_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error(ErrorKind::kFormat, m) {}
};

class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& m)
      : Error(ErrorKind::kCorruption, m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(ErrorKind::kConfig, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

// Process exit codes used by the command line tool.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kConfig = 2;
inline constexpr int kFormat = 3;
inline constexpr int kBinding = 4;
inline constexpr int kCorruption = 5;
inline constexpr int kIo = 6;
}  // namespace exit_code

int exit_code_for(ErrorKind kind);

}  // namespace regseg
