#include <iostream>

#include "roadseg/commands.hpp"

int main(int argc, char** argv) {
  return roadseg::cli::run(argc, argv, std::cout, std::cerr);
}
