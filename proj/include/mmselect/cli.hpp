#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mmselect::cli {

// Runs one subcommand. `args` excludes the program name. Returns the process
// exit status: 0 success, 1 pipeline error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmselect::cli
