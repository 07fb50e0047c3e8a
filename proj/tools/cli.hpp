#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace allmask::cli {

/// Runs the command-line tool in-process. Returns the exit code: 0 for
/// completed runs (including attacks that end unsuccessfully), 1 for
/// failed synthesis, 2 for usage, parse or policy errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace allmask::cli
