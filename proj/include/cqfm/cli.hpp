#pragma once

#include <iosfwd>

namespace cqfm {

// Entry point of the `cqfm` tool. argv[0] is the program name.
// Exit codes: 0 success, 2 bad arguments or input, 3 numeric degeneracy.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cqfm
