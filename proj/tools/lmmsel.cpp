#include <iostream>

#include "lmmsel/cli.hpp"

int main(int argc, char** argv) { return lmmsel::run_cli(argc, argv, std::cout, std::cerr); }
