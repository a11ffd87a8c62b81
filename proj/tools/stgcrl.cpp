#include <iostream>

#include "stgcrl/cli.hpp"

int main(int argc, char** argv) { return stgcrl::run_cli(argc, argv, std::cout, std::cerr); }
