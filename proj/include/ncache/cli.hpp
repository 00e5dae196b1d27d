#pragma once

// Command-line front end. Exit codes: 0 success, 1 validation or config
// error, 2 runtime failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace ncache {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

/// Runs the CLI with `args` excluding the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ncache
