#pragma once

// Command-line front end. Exit codes:
//   0 success (compute/grid: feasible design space)
//   1 internal error
//   2 malformed input or usage error
//   3 rank-deficient fit
//   4 no feasible design space (result JSON is still written)
//   5 compute deadline exceeded

#include <ostream>
#include <string>
#include <vector>

namespace dspace {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRankDeficient = 3;
inline constexpr int kExitInfeasible = 4;
inline constexpr int kExitTimeout = 5;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dspace
