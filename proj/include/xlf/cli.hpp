#pragma once

#include <string>
#include <vector>

namespace xlf {

// Full command-line entry point. Returns the process exit code:
// 0 success, 1 validation error, 2 runtime error.
int run_cli(const std::vector<std::string>& args);

} // namespace xlf
