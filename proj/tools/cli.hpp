// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace softtpr::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kIoError = 2,
  kNumericAbort = 3,
  kCheckFailed = 4,
};

/// Parses argv and runs one subcommand. Never throws; failures map to ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace softtpr::cli
