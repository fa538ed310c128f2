#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace entlm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

// Runs one invocation. args excludes the program name. Reports go to out,
// errors to err, diagnostics to the log (level from ENTLM_LOG).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace entlm::cli
