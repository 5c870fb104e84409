#pragma once

#include <string>
#include <vector>

namespace hitgeo {

// Command-line front end. Exit codes: 0 success, 2 configuration/usage error,
// 3 verification failure, 4 I/O error.
int cli_run(const std::vector<std::string>& args);

}  // namespace hitgeo
