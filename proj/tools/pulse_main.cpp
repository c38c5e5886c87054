#include <iostream>

#include "pulse/cli.hpp"

int main(int argc, char** argv) { return pulse::run_cli(argc, argv, std::cout, std::cerr); }
