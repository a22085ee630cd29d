#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace amc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitDivergence = 4;

/// Parses and dispatches one command line; never throws. `args[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amc::cli
