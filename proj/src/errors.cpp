#include "regseg/errors.hpp"

namespace regseg {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSize: return "size error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kSpec: return "spec error";
    case ErrorKind::kValue: return "value error";
    case ErrorKind::kSyntax: return "syntax error";
    case ErrorKind::kBinding: return "binding error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

SyntaxError::SyntaxError(const std::string& m, std::size_t position)
    : Error(ErrorKind::kSyntax,
            m + " at position " + std::to_string(position)),
      position_(position) {}

namespace {

std::string binding_message(const std::vector<std::string>& slots) {
  std::string msg = "unresolved parameter slots (" +
                    std::to_string(slots.size()) + "):";
  for (const auto& s : slots) msg += " " + s;
  return msg;
}

}  // namespace

BindingError::BindingError(std::vector<std::string> slots)
    : Error(ErrorKind::kBinding, binding_message(slots)),
      slots_(std::move(slots)) {}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kSyntax:
    case ErrorKind::kSpec:
      return exit_code::kConfig;
    case ErrorKind::kFormat: return exit_code::kFormat;
    case ErrorKind::kBinding: return exit_code::kBinding;
    case ErrorKind::kCorruption: return exit_code::kCorruption;
    case ErrorKind::kIo: return exit_code::kIo;
    default: return exit_code::kFailure;
  }
}

}  // namespace regseg
