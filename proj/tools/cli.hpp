#pragma once

#include <iosfwd>

namespace dwellmap::cli {

enum ExitCode : int {
  kOk = 0,
  kNotFound = 2,
  kValidation = 3,
  kIo = 4,
};

/// Entry point of the dwellmap binary; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dwellmap::cli
