#pragma once

#include <ostream>

namespace wbc {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Entry point of the `wbc` tool; subcommands synth, train, eval,
/// gradcheck and ablate. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wbc
