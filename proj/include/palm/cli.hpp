#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace palm::cli {

/// Runs one `palmcount` invocation. `args` excludes the program name.
/// Returns the process exit code; failures print one diagnostic line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace palm::cli
