#pragma once

#include <iosfwd>

namespace loopy::cli {

// Exit codes: 0 success, 2 usage or validation error, 1 internal failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace loopy::cli
