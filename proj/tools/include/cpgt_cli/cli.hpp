#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cpgt::cli {

/// Exit codes of the command line tool.
enum ExitCode : int {
  kOk = 0,
  kInputError = 1,       ///< unreadable file, malformed input, bad usage
  kDegenerateAlignment = 2,
  kFailure = 3,          ///< any other library error
};

/// Runs one command line. Errors are reported on `err` as a single line
/// `cpgt-error[<code>]: <message>`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from CPGT_THREADS, at least one.
unsigned thread_count();

}  // namespace cpgt::cli
