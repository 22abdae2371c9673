#pragma once

#include <string>
#include <vector>

namespace darkdeblur::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInternal = 2;

/// Parses and dispatches one command line (argv[0] is the program name).
/// Returns the process exit code: 0 success, 1 user error, 2 internal error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace darkdeblur::cli
