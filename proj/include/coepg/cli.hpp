#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coepg {

/// Entry point of the `coepg` tool. Returns 0 on success, 1 on a runtime
/// failure, 2 on a usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace coepg
