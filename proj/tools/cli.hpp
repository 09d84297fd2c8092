#pragma once

#include <iosfwd>

namespace bcensus::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitResource = 3;
inline constexpr int kExitData = 4;

// Entry point behind the `bcensus` binary; separated from main() so tests can
// drive it with captured streams.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bcensus::cli
