#pragma once

#include <string>
#include <vector>

namespace chasedpo::cli {

/// Runs one command line (arguments after the program name) and returns the
/// process exit code. Diagnostics go to stderr.
int run(const std::vector<std::string>& args);

}  // namespace chasedpo::cli
