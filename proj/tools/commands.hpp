#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mnlfa::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kBadInput = 2,
    kNotConverged = 3,
    kNumerical = 4,
    kGradcheckFailed = 5,
};

/// Runs the command line `args` (without the program name), writing reports to
/// `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mnlfa::cli
