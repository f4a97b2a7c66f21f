#include <iostream>
#include <string>
#include <vector>

#include "mcwdfa/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mcwdfa::run_cli(args, std::cout, std::cerr);
}
