#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace onset::cli {

/// Runs one subcommand. args excludes the program name. Returns the process
/// exit code: 0 success, 1 usage error, 2 data error, 3 numerical failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Every configuration key with its default value, as a JSON object.
std::string default_config_json();

}  // namespace onset::cli
