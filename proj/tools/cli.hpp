#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chance_rl::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kInfeasible = 3,
  kNumericError = 4,
};

/// Entry point of `chance-rl`; args exclude the program name. Progress goes
/// to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chance_rl::cli
