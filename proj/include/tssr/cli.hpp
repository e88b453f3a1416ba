#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tssr::cli {

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on a validation error (including unknown flags or
/// subcommands, which print usage), 2 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace tssr::cli
