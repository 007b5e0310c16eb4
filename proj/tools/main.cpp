#include <string>
#include <vector>

#include "convlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return convlab::run_command(args);
}
