#pragma once

#include <iosfwd>

namespace htv::cli {

/// Parses argv, dispatches the subcommand and maps errors to exit codes:
/// 0 success, 1 runtime failure, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace htv::cli
