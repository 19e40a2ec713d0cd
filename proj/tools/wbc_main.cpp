#include <iostream>

#include "wbc/cli.hpp"

int main(int argc, char** argv) { return wbc::run_cli(argc, argv, std::cout, std::cerr); }
