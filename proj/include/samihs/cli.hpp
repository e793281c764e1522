#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace samihs::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kData = 3,
  kCheckpoint = 4,
};

/// Runs one command line (`args[0]` is the program name). JSON log records
/// and reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace samihs::cli
