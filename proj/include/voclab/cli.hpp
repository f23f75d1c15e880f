#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace voclab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for the `voclab` tool. Data goes to files or `out`,
/// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace voclab::cli
