#include <iostream>

#include "cdexp/cli.hpp"

int main(int argc, char** argv) { return cdexp::run_cli(argc, argv, std::cout, std::cerr); }
