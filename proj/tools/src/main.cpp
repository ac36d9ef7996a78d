#include "cli.hpp"

int main(int argc, char** argv) {
  return attnflow::cli::run(std::vector<std::string>(argv, argv + argc));
}
