#pragma once

#include <iosfwd>

namespace troch {

/// Quick oracle/invariant suite for `troch selftest`: one line per check
/// on `out`, returns the number of failures.
int run_selftest(std::ostream& out);

} // namespace troch
