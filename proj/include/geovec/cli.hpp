#pragma once

#include <iostream>

namespace geovec {

// Entry point behind the `geovec` tool. Returns 0 on success, 2 for usage
// and input errors, 1 for anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace geovec
