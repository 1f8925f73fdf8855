#include <iostream>
#include <string>
#include <vector>

#include "mmdyn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mmdyn::cli::dispatch(args, std::cout, std::cerr);
}
