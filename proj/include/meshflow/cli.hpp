#pragma once

#include <map>
#include <string>

namespace meshflow {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitTopology = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitNonFinite = 4;

/// Flat key=value config file; '#' starts a comment, unknown keys are the
/// caller's problem (the CLI rejects them).
std::map<std::string, std::string> load_config(const std::string& path);

/// Entry point behind main(); returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace meshflow
