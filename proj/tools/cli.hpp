#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wisynth {

/// Runs `wisynth <args>`; args exclude the program name. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wisynth
