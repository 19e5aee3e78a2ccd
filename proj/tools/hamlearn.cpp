#include <iostream>
#include <string>
#include <vector>

#include "hamlearn/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hamlearn::cli::run(args, std::cout, std::cerr);
}
