#include <string>
#include <vector>

#include "blochopt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return blochopt::cli::run(args);
}
