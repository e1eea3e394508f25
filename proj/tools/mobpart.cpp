#include "mobpart/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mobpart::run_cli(argc, argv, std::cout, std::cerr); }
