#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ecgtext {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

// Runs one `ecgtext` command. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecgtext
