#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace paec::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInvalid = 2 };

// Parses and dispatches a full command line. Output goes to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

struct SelftestOptions {
  bool quick = false;
  std::string checkpoint;  // optional: verify this checkpoint loads
  std::uint64_t seed = 0;
};

// Invariant suites; prints one line per check and returns kOk or kInvalid.
int selftest(const SelftestOptions& options, std::ostream& out);

}  // namespace paec::cli
