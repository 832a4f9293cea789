#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cxr {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Parse,
  DuplicateId,
  UnknownLabel,
  ShapeMismatch,
  HashMismatch,
  Decode,
  NonFinite,
  Divergence,
  Inconsistent,
};

std::string_view to_string(ErrorKind kind);

/// Error type thrown by every module. `context()` accumulates
/// "fold 2 / resnet18"-style prefixes as the error propagates.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& context() const noexcept { return context_; }

  Error& with_context(std::string_view ctx) {
    context_ = context_.empty() ? std::string(ctx)
                                : std::string(ctx) + " / " + context_;
    return *this;
  }

 private:
  ErrorKind kind_;
  std::string context_;
};

}  // namespace cxr
