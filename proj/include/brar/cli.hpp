#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace brar::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericError = 3,
  kSelfcheckFailed = 4,
};

/// Runs one invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reads a flat "key = value" file (# comments) into "--key=value" tokens.
/// Throws DataError if the file cannot be read or a line has no '='.
std::vector<std::string> config_tokens(const std::string& path);

}  // namespace brar::cli
