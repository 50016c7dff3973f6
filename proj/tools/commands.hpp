#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gloss::cli {

inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;  // bad flags or config

/// Entry point shared by the executable and the tests. `args[0]` is the
/// program name. Log lines go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gloss::cli
