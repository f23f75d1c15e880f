#include "voclab/labels.hpp"

#include <string>

#include "voclab/error.hpp"

namespace voclab {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames = {"crying", "laughing", "canonical", "non_canonical",
                                                               "junk"};
}

std::string_view to_string(LabelClass c) noexcept { return kNames[index_of(c)]; }

std::optional<LabelClass> parse_label(std::string_view s) noexcept {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kNames[i] == s) return class_at(i);
  }
  return std::nullopt;
}

LabelClass label_from_string(std::string_view s) {
  if (auto c = parse_label(s)) return *c;
  throw ValidationError("unknown label \"" + std::string(s) + "\"");
}

}  // namespace voclab
