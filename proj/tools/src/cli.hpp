#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace attnflow::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kRuntime = 3 };

// Bad flags, unreadable inputs, invalid configs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// args[0] is the program name.
int run(const std::vector<std::string>& args);

}  // namespace attnflow::cli
