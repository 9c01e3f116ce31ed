#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kdiqa {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitNumeric = 3,
};

/// Entry point for `kdiqa <subcommand> ...`; args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kdiqa
