#include <iostream>

#include "ncspec/cli.hpp"

int main(int argc, char** argv) { return ncspec::run_cli(argc, argv, std::cout, std::cerr); }
