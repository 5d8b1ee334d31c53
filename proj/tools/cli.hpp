#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace oodseg::cli {

/// Runs one command line (without the program name). Failures print one
/// `oodseg: error: <kind>: <message>` line to `err` and return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oodseg::cli
