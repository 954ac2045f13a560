#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sae {

/// Runs the `saebench` command line. `args[0]` is the program name. Returns
/// the process exit code: 0 success, 1 usage error, 2 data/validation error,
/// 3 numerical failure. Warnings go to `err` and never change the code.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sae
