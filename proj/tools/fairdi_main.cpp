#include <iostream>

#include "fairdi/cli.hpp"

int main(int argc, char** argv) { return fairdi::run_cli(argc, argv, std::cout, std::cerr); }
