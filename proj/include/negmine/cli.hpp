#pragma once

#include <string>
#include <vector>

namespace negmine {

/// Entry point of the `negmine` tool. Returns the process exit code:
/// 0 when every declared output was written and hashed, 1 on a runtime
/// failure, 2 on a usage error (including an existing output directory
/// without --force).
int run_cli(const std::vector<std::string>& args);

const char* version();

}  // namespace negmine
