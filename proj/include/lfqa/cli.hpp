#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lfqa {

enum ExitCode : int { exit_ok = 0, exit_data_error = 1, exit_usage = 2, exit_partial = 3 };

/// Runs one subcommand. `args` excludes the program name. Never throws.
int dispatch(std::vector<std::string> const& args, std::ostream& out, std::ostream& err);

} // namespace lfqa
