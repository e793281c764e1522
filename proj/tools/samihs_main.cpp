#include <iostream>

#include "samihs/cli.hpp"

int main(int argc, char** argv) {
  return samihs::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
