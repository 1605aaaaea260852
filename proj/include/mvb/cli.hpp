#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mvb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable consulted when --data is not given.
inline constexpr const char* kDataRootEnv = "MVB_DATA_ROOT";

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

std::string version();

}  // namespace mvb::cli
