#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace deepgin {

// Stable exit codes of the command-line surface.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitGeneration = 3,
  kExitNumerical = 4,
};

// Runs one `deepgin <command> ...` invocation; `args` excludes the program
// name. Commands: maskgen, train, infer, eval.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepgin
