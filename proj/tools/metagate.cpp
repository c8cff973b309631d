#include <iostream>
#include <string>
#include <vector>

#include "metagate/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return metagate::cli::run(args, std::cout, std::cerr);
}
