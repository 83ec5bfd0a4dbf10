#pragma once

#include <iosfwd>
#include <string>

namespace ahmsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

std::string version();

/// Entry point for the `ahmsa` tool. Subcommands: extract-flow, gen-synthetic,
/// train, loso, report. Results go to `out`, progress and errors to `err`.
/// Returns 0 on success, 1 on a runtime failure, 2 on a usage or config error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ahmsa::cli
