#pragma once

// Experiment runner behind the `langdaug` executable.

#include <string>
#include <vector>

namespace langdaug {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_missing_artifact = 3,
    exit_divergence = 4,
};

/// argv-style entry point (args[0] is the program name). Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace langdaug
