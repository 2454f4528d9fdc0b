#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace biofm::tools {

// Exit codes: 0 success, 2 invalid input or configuration, 3 numeric failure
// during training, 1 anything else.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace biofm::tools
