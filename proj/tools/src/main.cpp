#include <iostream>

#include "cpgt_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cpgt::cli::run(args, std::cout, std::cerr);
}
