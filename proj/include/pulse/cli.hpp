#pragma once

#include <iosfwd>

namespace pulse {

/// Entry point of the `pulse` command. Returns 0 on success, 1 on a
/// configuration or usage error and 2 on a runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pulse
