#pragma once

#include <string>
#include <vector>

namespace pttr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;    // bad arguments, config or input data
inline constexpr int kFailure = 2;  // runtime failure, including failed checks

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace pttr::cli
