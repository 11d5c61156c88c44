#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gridstate {

/// Exit codes of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitIo = 3 };

/// Runs one command. `args` excludes the program name. Reports go to `out`,
/// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace gridstate
