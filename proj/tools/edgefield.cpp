#include <iostream>

#include "edgefield/cli.hpp"

int main(int argc, char** argv) { return edgefield::cli_dispatch(argc, argv, std::cout, std::cerr); }
