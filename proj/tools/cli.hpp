#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace oodrl::cli {

// Exit codes: 0 ok, 2 config or usage error, 3 training failure, 1 anything else.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTraining = 3;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oodrl::cli
