#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace voclab {

/// The five vocalization classes. The enumerator order is the matrix
/// row/column order used everywhere in the toolkit.
enum class LabelClass : std::uint8_t { Crying = 0, Laughing, Canonical, NonCanonical, Junk };

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<LabelClass, kNumClasses> kAllClasses = {
    LabelClass::Crying, LabelClass::Laughing, LabelClass::Canonical, LabelClass::NonCanonical,
    LabelClass::Junk};

constexpr std::size_t index_of(LabelClass c) noexcept { return static_cast<std::size_t>(c); }
constexpr LabelClass class_at(std::size_t i) noexcept { return static_cast<LabelClass>(i); }

/// Fixed lowercase serialization name ("crying", ..., "non_canonical", "junk").
std::string_view to_string(LabelClass c) noexcept;

std::optional<LabelClass> parse_label(std::string_view s) noexcept;

/// Like parse_label but throws ValidationError for unknown strings.
LabelClass label_from_string(std::string_view s);

}  // namespace voclab
