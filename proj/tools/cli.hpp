#pragma once

namespace scm::cli {

// Exit codes of the command-line tool.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericalError = 3;

int run(int argc, char** argv);

}  // namespace scm::cli
