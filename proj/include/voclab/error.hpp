#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace voclab {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Input that parsed but breaks a data-model invariant or operation precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A statistic whose denominator vanished (e.g. kappa with zero expected disagreement).
class UndefinedStatistic : public Error {
 public:
  UndefinedStatistic(const std::string& what, double context_value)
      : Error(what), context_value_(context_value) {}
  /// Supporting quantity for the report, e.g. the observed disagreement.
  double context_value() const noexcept { return context_value_; }

 private:
  double context_value_;
};

}  // namespace voclab
