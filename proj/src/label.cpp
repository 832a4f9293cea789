#include "cxr/label.hpp"
#include "cxr/error.hpp"

#include <algorithm>
#include <cctype>

namespace cxr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DuplicateId: return "duplicate_id";
    case ErrorKind::UnknownLabel: return "unknown_label";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::HashMismatch: return "hash_mismatch";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::NonFinite: return "non_finite";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Inconsistent: return "inconsistent";
  }
  return "unknown";
}

std::optional<Label> parse_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "covid" || lower == "positive") return Label::Positive;
  if (lower == "normal" || lower == "negative") return Label::Negative;
  return std::nullopt;
}

std::string_view label_name(Label l) {
  return l == Label::Positive ? "covid" : "normal";
}

}  // namespace cxr
