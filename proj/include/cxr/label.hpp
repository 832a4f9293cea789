#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace cxr {

/// Binary class label. POSITIVE is COVID-19, NEGATIVE is Normal; the
/// positive class is fixed for every metric in the project.
enum class Label { Positive, Negative };

inline constexpr int kNumClasses = 2;

/// Class index used by the head: 0 = POSITIVE, 1 = NEGATIVE.
constexpr int class_index(Label l) { return l == Label::Positive ? 0 : 1; }
constexpr Label label_from_index(int i) {
  return i == 0 ? Label::Positive : Label::Negative;
}

/// Accepts "covid"/"normal" (case-insensitive) plus the canonical
/// "positive"/"negative" spellings.
std::optional<Label> parse_label(std::string_view text);

/// Manifest spelling: "covid" or "normal".
std::string_view label_name(Label l);

}  // namespace cxr
