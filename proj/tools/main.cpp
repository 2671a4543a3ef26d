#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return calib_il::cli::run_cli(argc, argv, std::cout, std::cerr); }
