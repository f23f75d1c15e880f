#include "voclab/fraction.hpp"

#include <charconv>
#include <string>

#include "voclab/error.hpp"

namespace voclab {

namespace {

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw ValidationError("invalid number \"" + std::string(whole) + "\"");
  }
  return v;
}

}  // namespace

Fraction parse_fraction(std::string_view s) {
  if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    Fraction f{parse_int(s.substr(0, slash), s), parse_int(s.substr(slash + 1), s)};
    if (f.den <= 0 || f.num < 0) throw ValidationError("invalid fraction \"" + std::string(s) + "\"");
    return f;
  }
  if (const auto dot = s.find('.'); dot != std::string_view::npos) {
    const std::string_view int_part = s.substr(0, dot);
    const std::string_view frac_part = s.substr(dot + 1);
    if (frac_part.size() > 15) throw ValidationError("too many decimals in \"" + std::string(s) + "\"");
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
    const std::int64_t whole = int_part.empty() ? 0 : parse_int(int_part, s);
    const std::int64_t frac = frac_part.empty() ? 0 : parse_int(frac_part, s);
    if (whole < 0 || frac < 0) throw ValidationError("invalid fraction \"" + std::string(s) + "\"");
    return {whole * den + frac, den};
  }
  const std::int64_t v = parse_int(s, s);
  if (v < 0) throw ValidationError("invalid fraction \"" + std::string(s) + "\"");
  return {v, 1};
}

std::string to_string(const Fraction& f) { return std::to_string(f.num) + "/" + std::to_string(f.den); }

std::int64_t ceil_mul(const Fraction& f, std::int64_t n) noexcept {
  const std::int64_t p = f.num * n;
  return (p + f.den - 1) / f.den;
}

}  // namespace voclab
