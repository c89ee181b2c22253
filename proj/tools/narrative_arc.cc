#include <iostream>

#include "narrative/cli.h"

int main(int argc, char** argv) { return narrative::run_cli(argc, argv, std::cout, std::cerr); }
