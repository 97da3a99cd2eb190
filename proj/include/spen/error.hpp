#pragma once

#include <stdexcept>
#include <string>

namespace spen {

enum class ErrorKind {
  kShape,
  kDomain,
  kState,
  kIo,
  kFormat,
  kConfig,
  kDivergence,
};

const char* error_kind_name(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (the CLI
// in particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace spen
