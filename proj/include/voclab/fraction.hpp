#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace voclab {

/// Exact non-negative rational used for thresholds, ratios and multipliers.
/// Not normalized; comparisons cross-multiply.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr double to_double() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }

  friend constexpr bool operator==(const Fraction& a, const Fraction& b) noexcept {
    return a.num * b.den == b.num * a.den;
  }
  friend constexpr std::strong_ordering operator<=>(const Fraction& a, const Fraction& b) noexcept {
    return a.num * b.den <=> b.num * a.den;
  }
};

/// Accepts "p/q", integers, and plain decimals ("0.80" -> 80/100).
Fraction parse_fraction(std::string_view s);
std::string to_string(const Fraction& f);

/// ceil(f * n) for n >= 0.
std::int64_t ceil_mul(const Fraction& f, std::int64_t n) noexcept;

}  // namespace voclab
