#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace grpolab {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitStageFailure = 3;

// Entry point for `grpolab <subcommand> ...`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grpolab
