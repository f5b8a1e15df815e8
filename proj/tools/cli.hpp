#pragma once

#include <iosfwd>

namespace rgn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitNumericalError = 2;

/// Entry point of the rgntpp executable. Diagnostics go to `err`, progress to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rgn::cli
