#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hamlearn::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitMismatch = 5;

/// Entry point of the command-line tool. `args` excludes the program name.
/// Results go to `out` as one "key=value" summary line; progress and errors
/// go to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

} // namespace hamlearn::cli
