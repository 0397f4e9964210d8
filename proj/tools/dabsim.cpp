#include <iostream>

#include "dab/cli.hpp"

int main(int argc, char** argv) { return dab::cli::run_cli(argc, argv, std::cout, std::cerr); }
