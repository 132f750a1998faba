#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qrtag/io.hpp"

namespace qrtag {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitUsage = 2,
  kExitBoundViolated = 3,
};

/// Environment variable consulted when --jobs is not given.
inline constexpr const char* kJobsEnv = "QRTAG_JOBS";

/// Entry point shared by the `qrtag` binary and the tests. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Built-in deterministic test patterns, e.g. "checkerboard 9x9" or "random 21x21".
std::vector<BitGrid> generate_pattern(const std::string& spec, int views, std::uint64_t seed);

}  // namespace qrtag
