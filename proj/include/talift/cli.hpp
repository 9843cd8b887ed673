#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace talift::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kUsage = 2, kBackend = 3 };

/// Runs one subcommand. Human-readable output goes to `out`, diagnostics to
/// `err`; structured results land under --out.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace talift::cli
