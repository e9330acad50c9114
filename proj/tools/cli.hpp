#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace proxygs::cli {

/// Runs one command line (args[0] is the program name). Results go to `out`,
/// errors to `err` as a JSON object. Returns the process exit code:
/// 0 success, 1 failure (including failed oracles), 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace proxygs::cli
