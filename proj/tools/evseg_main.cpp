#include <iostream>
#include <string>
#include <vector>

#include "evseg/cli.hpp"

int main(int argc, char** argv) {
  return evseg::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
