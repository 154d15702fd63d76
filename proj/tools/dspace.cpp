#include <iostream>

#include "dspace/cli.hpp"

int main(int argc, char** argv) {
  return dspace::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
