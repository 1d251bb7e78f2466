#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace abmsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Parse and run one command. Results go under --out; messages to `out`,
/// diagnostics and help on usage errors to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

/// Library version string.
const char* version() noexcept;

}  // namespace abmsim::cli
