#include <iostream>

#include "relreg/cli.hpp"

int main(int argc, char** argv) { return relreg::run_cli(argc, argv, std::cout, std::cerr); }
