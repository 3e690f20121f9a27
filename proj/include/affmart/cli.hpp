#pragma once

#include <iostream>

namespace affmart::cli {

/// Exit status: 0 Holds or success, 1 Fails, 2 Inconclusive, 3 usage or parse error.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace affmart::cli
