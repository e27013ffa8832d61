#pragma once

#include <iosfwd>

namespace pgd::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDataError = 1; // validation/format/generation errors, failed gradient check
inline constexpr int kUsageError = 2;

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Normal output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace pgd::cli
