#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hypergeo::cli {

/// Parses and executes one toolkit command. `args` excludes the program name.
/// Returns the process exit code: 0 on success, 2 on validation or usage
/// errors, 3 on numerical faults.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace hypergeo::cli
