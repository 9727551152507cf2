#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fuserank::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericFailure = 3,
};

// Runs one subcommand. args excludes the program name. Normal output goes to
// `out`, diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Gradient and metric self-checks behind `fuserank selftest`. Returns true if
// every check passed; writes one line per check to `out`.
bool run_selftest(std::size_t instances, std::uint64_t seed, std::ostream& out);

}  // namespace fuserank::cli
