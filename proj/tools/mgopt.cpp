#include <iostream>

#include "mgopt/commands.hpp"

int main(int argc, char** argv) { return mgopt::run_cli(argc, argv, std::cout, std::cerr); }
