#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace turbsim::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage_error = 2 };

/// Runs one command line (without the program name). Human-readable messages
/// go to `err`; JSON without an --out file goes to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace turbsim::cli
