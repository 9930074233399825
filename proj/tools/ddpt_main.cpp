// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "ddpt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ddpt::run_cli(args, std::cout, std::cerr);
}
