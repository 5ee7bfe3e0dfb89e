#pragma once
// Command-line surface. Exit codes: 0 success, 1 usage, 2 data, 3 provider.
// Errors are written to stderr as one JSON object.

#include <iosfwd>
#include <string>
#include <vector>

namespace pkt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitProvider = 3;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace pkt::cli
