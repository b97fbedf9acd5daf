#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace actguard {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

/// Runs one command line. `args` excludes the program name. Errors go to
/// `err` as "actguard: error[usage|data|internal]: <message>".
int cli_dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace actguard
