#include <iostream>

#include "sadda/cli.hpp"

int main(int argc, char** argv) { return sadda::run_cli(argc, argv, std::cout, std::cerr); }
