#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sopt {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitMissingInput = 4;

inline constexpr const char* kEngineVersion = "0.1.0";

// Runs the tool on `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sopt
