#pragma once

#include "sbm/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sbm::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kValidation = 3,
  kNumeric = 4,
  kSizeLimit = 5,
};

int exit_code(ErrorKind kind);

// args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace sbm::cli
