#include <string>
#include <vector>

#include "covct/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return covct::run_subcommand(args);
}
