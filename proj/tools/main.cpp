#include "ncache/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ncache::run_cli(args, std::cout, std::cerr);
}
