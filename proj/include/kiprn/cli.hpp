#pragma once

#include <string>
#include <vector>

namespace kiprn {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int run_cli(int argc, char** argv);

// In-process entry point for tests; args exclude the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace kiprn
