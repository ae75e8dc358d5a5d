#pragma once

#include <ostream>

namespace lmmsel {

// Exit codes of the command-line tool.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNotConverged = 3;  // only with --strict

// Environment variable holding the default --threads for `simulate`.
constexpr const char* kThreadsEnv = "LMMSEL_THREADS";

// Runs one invocation of the tool. JSON goes to --output (default stdout);
// the human-readable table goes to `out`, or to `err` when JSON uses stdout.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace lmmsel
