#pragma once

#include <iosfwd>

namespace mms {

/// Exit codes of the mmsc tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitParse = 2,
  kExitNetwork = 3,
  kExitProtocol = 4,
};

/// Entry point of the mmsc command line tool.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mms
