#pragma once

#include <string>
#include <vector>

namespace convlab {

/// Runs one CLI invocation (argv without the program name). Exit codes:
/// 0 success, 1 constraint violations, 2 usage/IO/parse errors.
int run_command(const std::vector<std::string>& args);

std::string cli_usage();

}  // namespace convlab
