#pragma once

#include <iosfwd>

namespace pcvae {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;

/// Runs `pcvae <subcommand> ...` in-process; subcommands are train,
/// generate, eval and pid. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pcvae
