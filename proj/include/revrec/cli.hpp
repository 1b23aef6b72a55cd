#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace revrec::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitBackend = 3;

/// Runs one revrec command. `args` excludes the program name. Results go to
/// `out` (or the --out file), diagnostics and the summary to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace revrec::cli
