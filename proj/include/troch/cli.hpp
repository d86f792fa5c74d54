#pragma once

#include <string>
#include <vector>

namespace troch {

/// Dispatch one CLI invocation (argv without the program name).
/// Returns 0 on success, 1 on validation errors, 2 on runtime failures.
int cli_run(const std::vector<std::string>& args);

} // namespace troch
